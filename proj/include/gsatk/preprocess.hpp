#pragma once

// Preprocessing: pre-filtering, gene-ID conversion, duplicate removal,
// between-sample normalization factors, and the log-cpm transformation.
// Fixed stage order: prefilter -> convert -> dedupe -> normalize ->
// transform. Library sizes are recomputed on the filtered matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsatk/error.hpp"
#include "gsatk/io.hpp"
#include "gsatk/stats.hpp"
#include "gsatk/types.hpp"

namespace gsatk {

// ---------------------------------------------------------------------------
// Pre-filtering
// ---------------------------------------------------------------------------

struct FilterRule {
  enum class Kind { kTotalCount, kCountInSamples, kCpmInSamples };
  Kind kind = Kind::kTotalCount;
  double threshold = 10.0;  // T for total count, c otherwise
  int min_samples = 1;      // k

  static FilterRule total_count(double t) {
    return {Kind::kTotalCount, t, 1};
  }
  static FilterRule count_in_samples(double c, int k) {
    return {Kind::kCountInSamples, c, k};
  }
  static FilterRule cpm_in_samples(double c, int k) {
    return {Kind::kCpmInSamples, c, k};
  }
};

/// Drops lowly expressed genes; row order is preserved.
inline CountMatrix prefilter(const CountMatrix& cm, const FilterRule& rule) {
  std::vector<std::int64_t> lib;
  if (rule.kind == FilterRule::Kind::kCpmInSamples) lib = cm.library_sizes();
  std::vector<GeneId> genes;
  std::vector<std::int64_t> counts;
  for (std::size_t i = 0; i < cm.n_genes(); ++i) {
    bool keep = false;
    switch (rule.kind) {
      case FilterRule::Kind::kTotalCount:
        keep = static_cast<double>(cm.row_sum(i)) >= rule.threshold;
        break;
      case FilterRule::Kind::kCountInSamples: {
        int q = 0;
        for (std::size_t j = 0; j < cm.n_samples(); ++j)
          if (static_cast<double>(cm.at(i, j)) >= rule.threshold) ++q;
        keep = q >= rule.min_samples;
        break;
      }
      case FilterRule::Kind::kCpmInSamples: {
        int q = 0;
        for (std::size_t j = 0; j < cm.n_samples(); ++j) {
          if (lib[j] == 0) continue;
          const double cpm = 1e6 * static_cast<double>(cm.at(i, j)) /
                             static_cast<double>(lib[j]);
          if (cpm >= rule.threshold) ++q;
        }
        keep = q >= rule.min_samples;
        break;
      }
    }
    if (!keep) continue;
    genes.push_back(cm.gene_ids()[i]);
    for (std::size_t j = 0; j < cm.n_samples(); ++j)
      counts.push_back(cm.at(i, j));
  }
  if (genes.empty())
    throw ValidationError("prefilter removed every gene");
  if (cm.unique_gene_ids())
    return CountMatrix(std::move(genes), cm.sample_ids(), std::move(counts));
  return CountMatrix::allow_duplicate_genes(std::move(genes), cm.sample_ids(),
                                            std::move(counts));
}

// ---------------------------------------------------------------------------
// Gene-ID conversion
// ---------------------------------------------------------------------------

struct ConversionReport {
  std::vector<GeneId> unmapped_sources;  // dropped rows
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
};

/// Relabels rows through the mapping. A source with several targets yields
/// duplicated rows with identical counts; distinct sources mapping to the
/// same target produce duplicate IDs in the output. Duplicate removal is a
/// separate step.
inline std::pair<CountMatrix, ConversionReport> convert_ids(
    const CountMatrix& cm, const GeneIdMapping& map) {
  std::vector<GeneId> genes;
  std::vector<std::int64_t> counts;
  ConversionReport report;
  report.rows_in = cm.n_genes();
  for (std::size_t i = 0; i < cm.n_genes(); ++i) {
    const auto* targets = map.targets(cm.gene_ids()[i]);
    if (targets == nullptr || targets->empty()) {
      report.unmapped_sources.push_back(cm.gene_ids()[i]);
      continue;
    }
    for (const auto& t : *targets) {
      genes.push_back(t);
      for (std::size_t j = 0; j < cm.n_samples(); ++j)
        counts.push_back(cm.at(i, j));
    }
  }
  if (genes.empty())
    throw ValidationError("gene-ID conversion left no rows");
  report.rows_out = genes.size();
  auto out = CountMatrix::allow_duplicate_genes(
      std::move(genes), cm.sample_ids(), std::move(counts));
  return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------------------
// Duplicate removal
// ---------------------------------------------------------------------------

enum class DupStrategy { kKeepFirst, kMean, kMaxCount };

/// Collapses duplicated gene IDs; the output keeps each ID once, ordered by
/// first occurrence. kMean rounds half away from zero to stay on integer
/// counts; kMaxCount keeps the row with the largest row sum (ties: first).
inline CountMatrix remove_duplicates(const CountMatrix& cm,
                                     DupStrategy strategy) {
  std::unordered_map<GeneId, std::vector<std::size_t>> groups;
  std::vector<GeneId> order;
  for (std::size_t i = 0; i < cm.n_genes(); ++i) {
    auto [it, inserted] = groups.try_emplace(cm.gene_ids()[i]);
    if (inserted) order.push_back(cm.gene_ids()[i]);
    it->second.push_back(i);
  }
  const std::size_t p = cm.n_samples();
  std::vector<GeneId> genes;
  std::vector<std::int64_t> counts;
  genes.reserve(order.size());
  counts.reserve(order.size() * p);
  for (const auto& id : order) {
    const auto& rows = groups.at(id);
    std::size_t pick = rows[0];
    switch (strategy) {
      case DupStrategy::kKeepFirst:
        break;
      case DupStrategy::kMaxCount: {
        std::int64_t best = cm.row_sum(rows[0]);
        for (std::size_t r = 1; r < rows.size(); ++r) {
          const std::int64_t s = cm.row_sum(rows[r]);
          if (s > best) {
            best = s;
            pick = rows[r];
          }
        }
        break;
      }
      case DupStrategy::kMean: {
        genes.push_back(id);
        for (std::size_t j = 0; j < p; ++j) {
          double m = 0.0;
          for (auto r : rows) m += static_cast<double>(cm.at(r, j));
          m /= static_cast<double>(rows.size());
          counts.push_back(std::llround(m));
        }
        continue;
      }
    }
    genes.push_back(id);
    for (std::size_t j = 0; j < p; ++j) counts.push_back(cm.at(pick, j));
  }
  return CountMatrix(std::move(genes), cm.sample_ids(), std::move(counts));
}

// ---------------------------------------------------------------------------
// Normalization factors
// ---------------------------------------------------------------------------

enum class NormMethod { kTmm, kMedianOfRatios, kNone };

inline const char* to_string(NormMethod m) {
  switch (m) {
    case NormMethod::kTmm: return "tmm";
    case NormMethod::kMedianOfRatios: return "median_of_ratios";
    case NormMethod::kNone: return "none";
  }
  return "?";
}

struct NormalizationFactors {
  std::vector<double> factors;          // s_j > 0
  std::vector<std::int64_t> lib_sizes;  // S_j, raw column sums
  NormMethod method = NormMethod::kNone;
};

namespace detail {

// Weighted trimmed mean of per-gene log2 ratios against a reference sample.
// Reference: sample whose upper-quartile count fraction is closest to the
// mean upper quartile. 30% of M-values and 5% of A-values trimmed
// symmetrically; weights are inverse asymptotic binomial variances.
inline std::vector<double> tmm_factors(const CountMatrix& cm,
                                       const std::vector<std::int64_t>& lib) {
  const std::size_t n = cm.n_genes(), p = cm.n_samples();
  for (std::size_t j = 0; j < p; ++j)
    if (lib[j] == 0)
      throw ValidationError("tmm: sample with zero library size");

  std::vector<double> uq(p);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> frac(n);
    for (std::size_t i = 0; i < n; ++i)
      frac[i] = static_cast<double>(cm.at(i, j)) / static_cast<double>(lib[j]);
    uq[j] = quantile(std::move(frac), 0.75);
  }
  double mean_uq = 0.0;
  for (double v : uq) mean_uq += v;
  mean_uq /= static_cast<double>(p);
  std::size_t ref = 0;
  double best = std::fabs(uq[0] - mean_uq);
  for (std::size_t j = 1; j < p; ++j) {
    const double d = std::fabs(uq[j] - mean_uq);
    if (d < best) {
      best = d;
      ref = j;
    }
  }

  std::vector<double> factors(p, 1.0);
  const double lib_ref = static_cast<double>(lib[ref]);
  for (std::size_t j = 0; j < p; ++j) {
    if (j == ref) {
      factors[j] = 1.0;
      continue;
    }
    const double lib_j = static_cast<double>(lib[j]);
    struct Entry {
      double m, a, w;
    };
    std::vector<Entry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double kj = static_cast<double>(cm.at(i, j));
      const double kr = static_cast<double>(cm.at(i, ref));
      if (kj <= 0.0 || kr <= 0.0) continue;
      const double fj = kj / lib_j, fr = kr / lib_ref;
      const double m = std::log2(fj / fr);
      const double a = 0.5 * std::log2(fj * fr);
      const double var = (lib_j - kj) / (lib_j * kj) +
                         (lib_ref - kr) / (lib_ref * kr);
      entries.push_back({m, a, var > 0.0 ? 1.0 / var : 0.0});
    }
    if (entries.empty()) continue;  // no co-expressed genes; keep factor 1

    std::vector<double> ms(entries.size()), as(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      ms[i] = entries[i].m;
      as[i] = entries[i].a;
    }
    const double m_lo = quantile(ms, 0.30), m_hi = quantile(ms, 0.70);
    const double a_lo = quantile(as, 0.05), a_hi = quantile(as, 0.95);
    double wsum = 0.0, wm = 0.0;
    for (const auto& e : entries) {
      if (e.m < m_lo || e.m > m_hi || e.a < a_lo || e.a > a_hi) continue;
      wsum += e.w;
      wm += e.w * e.m;
    }
    factors[j] = wsum > 0.0 ? std::exp2(wm / wsum) : 1.0;
  }

  // Rescale to geometric mean 1.
  double lg = 0.0;
  for (double f : factors) lg += std::log(f);
  const double gm = std::exp(lg / static_cast<double>(p));
  for (double& f : factors) f /= gm;
  return factors;
}

inline std::vector<double> median_of_ratios_factors(const CountMatrix& cm) {
  const std::size_t n = cm.n_genes(), p = cm.n_samples();
  std::vector<double> geomean(n, 0.0);
  std::vector<bool> all_positive(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    double lsum = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const std::int64_t k = cm.at(i, j);
      if (k <= 0) {
        all_positive[i] = false;
        break;
      }
      lsum += std::log(static_cast<double>(k));
    }
    if (all_positive[i]) geomean[i] = std::exp(lsum / static_cast<double>(p));
  }
  bool any = false;
  for (bool b : all_positive) any = any || b;
  if (!any)
    throw ValidationError(
        "median-of-ratios needs at least one gene with all-positive counts");
  std::vector<double> factors(p);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> ratios;
    for (std::size_t i = 0; i < n; ++i)
      if (all_positive[i])
        ratios.push_back(static_cast<double>(cm.at(i, j)) / geomean[i]);
    factors[j] = median(std::move(ratios));
  }
  return factors;
}

}  // namespace detail

inline NormalizationFactors normalization_factors(const CountMatrix& cm,
                                                  NormMethod method) {
  NormalizationFactors nf;
  nf.method = method;
  nf.lib_sizes = cm.library_sizes();
  switch (method) {
    case NormMethod::kNone:
      nf.factors.assign(cm.n_samples(), 1.0);
      break;
    case NormMethod::kTmm:
      nf.factors = detail::tmm_factors(cm, nf.lib_sizes);
      break;
    case NormMethod::kMedianOfRatios:
      nf.factors = detail::median_of_ratios_factors(cm);
      break;
  }
  for (double f : nf.factors)
    if (!(f > 0.0))
      throw NumericError("normalization produced a non-positive factor");
  return nf;
}

// ---------------------------------------------------------------------------
// log-cpm transformation
// ---------------------------------------------------------------------------

/// Real-valued matrix on the log2 counts-per-million scale.
struct TransformedMatrix {
  std::vector<GeneId> gene_ids;
  std::vector<SampleId> sample_ids;
  std::vector<double> values;  // row-major, same axes as the source matrix

  std::size_t n_genes() const { return gene_ids.size(); }
  std::size_t n_samples() const { return sample_ids.size(); }
  double at(std::size_t i, std::size_t j) const {
    return values[i * n_samples() + j];
  }
};

/// K~ = log2((K + 0.5) / (S_j * s_j + 1) * 1e6). Precision weights are
/// deliberately not part of this transformation.
inline TransformedMatrix log_cpm_transform(const CountMatrix& cm,
                                           const NormalizationFactors& nf) {
  if (nf.factors.size() != cm.n_samples() ||
      nf.lib_sizes.size() != cm.n_samples())
    throw ValidationError("normalization factors do not match sample axis");
  if (nf.lib_sizes != cm.library_sizes())
    throw ValidationError(
        "normalization factors were computed on a different matrix");
  TransformedMatrix tm;
  tm.gene_ids = cm.gene_ids();
  tm.sample_ids = cm.sample_ids();
  tm.values.resize(cm.n_genes() * cm.n_samples());
  std::vector<double> eff(cm.n_samples());
  for (std::size_t j = 0; j < cm.n_samples(); ++j)
    eff[j] = static_cast<double>(nf.lib_sizes[j]) * nf.factors[j] + 1.0;
  for (std::size_t i = 0; i < cm.n_genes(); ++i)
    for (std::size_t j = 0; j < cm.n_samples(); ++j)
      tm.values[i * cm.n_samples() + j] =
          std::log2((static_cast<double>(cm.at(i, j)) + 0.5) / eff[j] * 1e6);
  return tm;
}

/// TSV writer for transformed matrices (same layout as the count matrix).
inline std::string write_transformed_matrix(const TransformedMatrix& tm) {
  std::string out = "gene_id";
  for (const auto& s : tm.sample_ids) {
    out += '\t';
    out += s;
  }
  out += '\n';
  for (std::size_t i = 0; i < tm.n_genes(); ++i) {
    out += tm.gene_ids[i];
    for (std::size_t j = 0; j < tm.n_samples(); ++j) {
      out += '\t';
      out += format_double(tm.at(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace gsatk
