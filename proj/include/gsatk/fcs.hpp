#pragma once

// Functional class scoring: the running-sum enrichment score, its
// permutation null distributions (phenotype, gene-set, gene-label), NES,
// and PADOG. Permutation i always consumes RngStream(seed, i), so results
// do not depend on worker count or scheduling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gsatk/diffexpr.hpp"
#include "gsatk/error.hpp"
#include "gsatk/parallel.hpp"
#include "gsatk/rng.hpp"
#include "gsatk/stats.hpp"
#include "gsatk/types.hpp"

namespace gsatk {

struct EnrichmentScore {
  double es = 0.0;
  std::size_t argmax_step = 0;  // 1-based step of max |P_hit - P_miss|
};

namespace detail {

inline double es_weight(double value, double p_exp) {
  // Exact power-of-two scale cancellation matters for reproducibility, so
  // the common exponents avoid the generic pow path.
  const double a = std::fabs(value);
  if (p_exp == 1.0) return a;
  if (p_exp == 0.0) return 1.0;
  if (p_exp == 2.0) return a * a;
  if (p_exp == 1.5) return a * std::sqrt(a);
  return std::pow(a, p_exp);
}

/// Single pass over the ranking. `hit_positions` must be sorted ascending.
/// P_hit and P_miss accumulate separately (matching a from-scratch
/// evaluation term for term) and the earliest step wins ties.
inline EnrichmentScore es_from_positions(const std::vector<double>& values,
                                         const std::vector<std::size_t>& hit_positions,
                                         double p_exp) {
  const std::size_t n = values.size();
  const std::size_t g = hit_positions.size();
  if (g == 0) throw ValidationError("enrichment score: empty gene set");
  if (g >= n)
    throw ValidationError(
        "enrichment score: gene set exhausts the ranking (no misses)");
  double n_r = 0.0;
  for (auto pos : hit_positions) n_r += es_weight(values[pos], p_exp);
  if (n_r == 0.0)
    throw NumericError(
        "enrichment score: all member statistics are zero (N_R = 0)");
  const double miss_inc = 1.0 / static_cast<double>(n - g);
  double p_hit = 0.0, p_miss = 0.0;
  double best = 0.0, best_abs = -1.0;
  std::size_t best_step = 1, next_hit = 0;
  for (std::size_t l = 0; l < n; ++l) {
    if (next_hit < g && hit_positions[next_hit] == l) {
      p_hit += es_weight(values[l], p_exp) / n_r;
      ++next_hit;
    } else {
      p_miss += miss_inc;
    }
    const double diff = p_hit - p_miss;
    if (std::fabs(diff) > best_abs) {
      best_abs = std::fabs(diff);
      best = diff;
      best_step = l + 1;
    }
  }
  return EnrichmentScore{best, best_step};
}

}  // namespace detail

/// Enrichment score of a gene set on a ranked list.
inline EnrichmentScore enrichment_score(const RankedGeneList& rl,
                                        const GeneSet& set, double p_exp) {
  if (p_exp < 0.0)
    throw ValidationError("enrichment score: exponent must be >= 0");
  std::vector<std::size_t> hits;
  const auto& ids = rl.gene_ids();
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (set.contains(ids[i])) hits.push_back(i);
  return detail::es_from_positions(rl.statistics(), hits, p_exp);
}

// ---------------------------------------------------------------------------
// Permutation null distributions
// ---------------------------------------------------------------------------

enum class PermScheme { kPhenotype, kGeneSet, kGeneLabel };

inline const char* to_string(PermScheme s) {
  switch (s) {
    case PermScheme::kPhenotype: return "PHENOTYPE";
    case PermScheme::kGeneSet: return "GENE_SET";
    case PermScheme::kGeneLabel: return "GENE_LABEL";
  }
  return "?";
}

struct PermutationNull {
  PermScheme scheme = PermScheme::kGeneSet;
  std::vector<double> es;  // one value per permutation
};

/// Matrix-side context shared by all phenotype permutations of one run.
struct PhenotypeContext {
  const TransformedMatrix* tm = nullptr;
  const PhenotypeLabels* ph = nullptr;
  GeneStatKind statistic = GeneStatKind::kSignalToNoise;
};

namespace detail {

// Phenotype permutations are assigned to samples in sorted-sample-ID order,
// not to column positions. Reordering samples within a group then leaves
// every permuted labeling (and thus the whole result table) unchanged.
class LabelPermuter {
 public:
  explicit LabelPermuter(const PhenotypeLabels& ph) {
    const auto& ids = ph.sample_ids();
    canon_.resize(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) canon_[k] = k;
    std::sort(canon_.begin(), canon_.end(),
              [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    base_.resize(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k)
      base_[k] = ph.labels()[canon_[k]];
  }

  std::vector<int> labels_for(std::uint64_t seed, std::uint64_t index) const {
    RngStream stream(seed, index);
    const auto shuffle = permute(stream, base_.size());
    std::vector<int> labels(base_.size());
    for (std::size_t k = 0; k < base_.size(); ++k)
      labels[canon_[k]] = base_[shuffle[k]];
    return labels;
  }

 private:
  std::vector<std::size_t> canon_;
  std::vector<int> base_;
};

// Ranking from statistic values: order by value descending, gene ID
// ascending on ties. Returns positions such that order[k] = gene index at
// rank k.
inline std::vector<std::size_t> ranking_order(
    const std::vector<GeneId>& ids, const std::vector<double>& stats) {
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (stats[a] != stats[b]) return stats[a] > stats[b];
    return ids[a] < ids[b];
  });
  return order;
}

inline void warn_if_too_many_label_arrangements(
    const PhenotypeLabels& ph, int n_perm, std::vector<std::string>* warnings) {
  const double distinct =
      std::exp(ln_choose(static_cast<long>(ph.labels().size()),
                         static_cast<long>(ph.m1())));
  if (warnings != nullptr && static_cast<double>(n_perm) > distinct)
    warnings->push_back(
        "n_permutations exceeds the number of distinct label arrangements (" +
        std::to_string(static_cast<long long>(distinct)) +
        "); duplicate permutations are permitted");
}

}  // namespace detail

/// Null distribution of enrichment scores for one gene set.
/// PHENOTYPE reshuffles labels and rebuilds the ranking per permutation;
/// GENE_SET scores random same-size gene sets on the original ranking;
/// GENE_LABEL shuffles which gene sits at which (fixed) statistic position.
inline PermutationNull permutation_null(PermScheme scheme,
                                        const PhenotypeContext* matrix_ctx,
                                        const RankedGeneList* ranking,
                                        const GeneSet& set,
                                        const AnalysisConfig& config,
                                        std::vector<std::string>* warnings = nullptr) {
  config.validate();
  PermutationNull null;
  null.scheme = scheme;
  null.es.assign(static_cast<std::size_t>(config.n_permutations), 0.0);

  if (scheme == PermScheme::kPhenotype) {
    if (matrix_ctx == nullptr || matrix_ctx->tm == nullptr ||
        matrix_ctx->ph == nullptr)
      throw ValidationError("phenotype permutation needs the count matrix");
    const auto& tm = *matrix_ctx->tm;
    const auto& ph = *matrix_ctx->ph;
    if (ph.m0() < 2 || ph.m1() < 2)
      throw ValidationError("phenotype permutation needs groups of size >= 2");
    detail::warn_if_too_many_label_arrangements(ph, config.n_permutations,
                                                warnings);
    GroupStatsEngine engine(tm);
    detail::LabelPermuter permuter(ph);
    std::vector<bool> member(tm.n_genes());
    for (std::size_t i = 0; i < tm.n_genes(); ++i)
      member[i] = set.contains(tm.gene_ids[i]);
    parallel_for(null.es.size(), config.workers, [&](std::size_t i) {
      const auto labels = permuter.labels_for(config.seed, i);
      const auto gs = engine.compute(labels);
      const auto stats =
          gene_level_statistic_values(gs, matrix_ctx->statistic);
      const auto order = detail::ranking_order(tm.gene_ids, stats);
      std::vector<double> values(order.size());
      std::vector<std::size_t> hits;
      for (std::size_t k = 0; k < order.size(); ++k) {
        values[k] = stats[order[k]];
        if (member[order[k]]) hits.push_back(k);
      }
      null.es[i] =
          detail::es_from_positions(values, hits, config.weight_exponent).es;
    });
    return null;
  }

  if (ranking == nullptr)
    throw ValidationError("gene-set/gene-label permutation needs a ranking");
  const auto& values = ranking->statistics();
  const std::size_t n = values.size();

  if (scheme == PermScheme::kGeneSet) {
    std::size_t g = 0;
    for (const auto& id : ranking->gene_ids())
      if (set.contains(id)) ++g;
    if (g == 0) throw ValidationError("gene set does not overlap the ranking");
    parallel_for(null.es.size(), config.workers, [&](std::size_t i) {
      RngStream stream(config.seed, i);
      auto positions = sample_without_replacement(stream, n, g);
      std::sort(positions.begin(), positions.end());
      null.es[i] =
          detail::es_from_positions(values, positions, config.weight_exponent)
              .es;
    });
    return null;
  }

  // GENE_LABEL: statistic values stay at their rank positions; gene
  // identities are shuffled across positions.
  std::vector<bool> member(n);
  for (std::size_t i = 0; i < n; ++i)
    member[i] = set.contains(ranking->gene_ids()[i]);
  parallel_for(null.es.size(), config.workers, [&](std::size_t i) {
    RngStream stream(config.seed, i);
    const auto shuffle = permute(stream, n);
    std::vector<std::size_t> positions;
    for (std::size_t k = 0; k < n; ++k)
      if (member[shuffle[k]]) positions.push_back(k);
    null.es[i] =
        detail::es_from_positions(values, positions, config.weight_exponent)
            .es;
  });
  return null;
}

// ---------------------------------------------------------------------------
// GSEA
// ---------------------------------------------------------------------------

namespace detail {

struct EsSummary {
  double raw_p = 1.0;
  double nes = std::numeric_limits<double>::quiet_NaN();
  bool nes_defined = false;
};

/// Same-sign convention: permutation scores on the observed ES's side of
/// zero form the null sample; ES >= 0 counts as the positive side.
inline EsSummary summarize_es(double es, const std::vector<double>& perm_es,
                              NesMode mode) {
  EsSummary out;
  const bool positive = es >= 0.0;
  long n_same = 0, n_extreme = 0;
  double abs_sum_same = 0.0, abs_sum_all = 0.0;
  for (double pe : perm_es) {
    const bool pe_positive = pe >= 0.0;
    abs_sum_all += std::fabs(pe);
    if (pe_positive == positive) {
      ++n_same;
      abs_sum_same += std::fabs(pe);
      if (std::fabs(pe) >= std::fabs(es)) ++n_extreme;
    }
  }
  out.raw_p = (1.0 + static_cast<double>(n_extreme)) /
              (1.0 + static_cast<double>(n_same));
  double denom = 0.0;
  if (mode == NesMode::kSameSign) {
    if (n_same > 0) denom = abs_sum_same / static_cast<double>(n_same);
  } else {
    if (!perm_es.empty())
      denom = abs_sum_all / static_cast<double>(perm_es.size());
  }
  if (denom > 0.0) {
    out.nes = es / denom;  // denominator is a mean of |ES|, sign preserved
    out.nes_defined = true;
  }
  return out;
}

}  // namespace detail

/// GSEA on a precomputed ranking (gene-set or gene-label permutation).
/// Phenotype permutation is not defined here: the ranking has already
/// discarded the sample conditions.
inline EnrichmentResultTable gsea_test(const RankedGeneList& ranking,
                                       const GeneSetDatabase& db,
                                       PermScheme scheme,
                                       const AnalysisConfig& config) {
  if (scheme == PermScheme::kPhenotype)
    throw ValidationError(
        "phenotype permutation requires the expression matrix; rankings only "
        "support gene-set or gene-label permutation");
  config.validate();
  EnrichmentResultTable table;
  table.method = "gsea";
  table.seed = config.seed;

  std::vector<EnrichmentRow> rows(db.size());
  std::vector<std::string> warnings;
  // Gene sets are the parallel unit here; the per-set permutation loop runs
  // single-threaded.
  AnalysisConfig inner = config;
  inner.workers = 1;
  parallel_for(db.size(), config.workers, [&](std::size_t si) {
    const auto& set = db.sets()[si];
    const auto es = enrichment_score(ranking, set, config.weight_exponent);
    const auto null =
        permutation_null(scheme, nullptr, &ranking, set, inner, nullptr);
    const auto s = detail::summarize_es(es.es, null.es, config.nes_mode);
    auto& row = rows[si];
    row.set_name = set.name();
    std::size_t overlap = 0;
    for (const auto& id : ranking.gene_ids())
      if (set.contains(id)) ++overlap;
    row.set_size_used = static_cast<int>(overlap);
    row.score = es.es;
    row.raw_p = s.raw_p;
    row.norm_score = s.nes;
    row.scheme = to_string(scheme);
    row.n_perm = config.n_permutations;
  });
  for (std::size_t si = 0; si < rows.size(); ++si)
    if (std::isnan(rows[si].norm_score))
      warnings.push_back("set " + rows[si].set_name +
                         ": no same-sign permutation scores; NES undefined");
  table.rows = std::move(rows);
  table.warnings = std::move(warnings);

  std::vector<double> p;
  p.reserve(table.rows.size());
  for (const auto& r : table.rows) p.push_back(r.raw_p);
  const auto adj = adjust_bh(p);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    table.rows[i].adjusted_p = adj[i];
  return table;
}

/// GSEA with phenotype permutation (matrix input). One label shuffle per
/// permutation rebuilds the full ranking; every set is scored against it.
inline EnrichmentResultTable gsea_test(const TransformedMatrix& tm,
                                       const PhenotypeLabels& ph,
                                       const GeneSetDatabase& db,
                                       GeneStatKind statistic,
                                       const AnalysisConfig& config) {
  config.validate();
  if (ph.sample_ids() != tm.sample_ids)
    throw ValidationError("phenotype sample IDs do not match matrix");
  if (ph.m0() < 2 || ph.m1() < 2)
    throw ValidationError("phenotype permutation needs groups of size >= 2");

  EnrichmentResultTable table;
  table.method = "gsea";
  table.seed = config.seed;
  detail::warn_if_too_many_label_arrangements(ph, config.n_permutations,
                                              &table.warnings);

  GroupStatsEngine engine(tm);
  const std::size_t n = tm.n_genes();

  // Membership positions are recomputed per permutation from per-gene flags.
  std::vector<std::vector<bool>> member(db.size(),
                                        std::vector<bool>(n, false));
  for (std::size_t si = 0; si < db.size(); ++si) {
    const auto& set = db.sets()[si];
    for (std::size_t i = 0; i < n; ++i)
      member[si][i] = set.contains(tm.gene_ids[i]);
  }

  // Observed ranking and scores.
  const auto observed_gs = engine.compute(ph.labels());
  const auto observed_stats =
      gene_level_statistic_values(observed_gs, statistic);
  const auto observed_order =
      detail::ranking_order(tm.gene_ids, observed_stats);
  std::vector<double> observed_values(n);
  for (std::size_t k = 0; k < n; ++k)
    observed_values[k] = observed_stats[observed_order[k]];

  std::vector<EnrichmentScore> observed_es(db.size());
  for (std::size_t si = 0; si < db.size(); ++si) {
    std::vector<std::size_t> hits;
    for (std::size_t k = 0; k < n; ++k)
      if (member[si][observed_order[k]]) hits.push_back(k);
    observed_es[si] =
        detail::es_from_positions(observed_values, hits,
                                  config.weight_exponent);
  }

  // Permutation scores: perm_es[si][i] for permutation i.
  detail::LabelPermuter permuter(ph);
  std::vector<std::vector<double>> perm_es(
      db.size(),
      std::vector<double>(static_cast<std::size_t>(config.n_permutations)));
  parallel_for(static_cast<std::size_t>(config.n_permutations), config.workers,
               [&](std::size_t i) {
                 const auto labels = permuter.labels_for(config.seed, i);
                 const auto gs = engine.compute(labels);
                 const auto stats = gene_level_statistic_values(gs, statistic);
                 const auto order = detail::ranking_order(tm.gene_ids, stats);
                 std::vector<double> values(n);
                 for (std::size_t k = 0; k < n; ++k)
                   values[k] = stats[order[k]];
                 std::vector<std::size_t> hits;
                 for (std::size_t si = 0; si < db.size(); ++si) {
                   hits.clear();
                   for (std::size_t k = 0; k < n; ++k)
                     if (member[si][order[k]]) hits.push_back(k);
                   perm_es[si][i] =
                       detail::es_from_positions(values, hits,
                                                 config.weight_exponent)
                           .es;
                 }
               });

  for (std::size_t si = 0; si < db.size(); ++si) {
    const auto& set = db.sets()[si];
    const auto s =
        detail::summarize_es(observed_es[si].es, perm_es[si], config.nes_mode);
    EnrichmentRow row;
    row.set_name = set.name();
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (member[si][i]) ++overlap;
    row.set_size_used = static_cast<int>(overlap);
    row.score = observed_es[si].es;
    row.raw_p = s.raw_p;
    row.norm_score = s.nes;
    row.scheme = to_string(PermScheme::kPhenotype);
    row.n_perm = config.n_permutations;
    if (!s.nes_defined)
      table.warnings.push_back("set " + set.name() +
                               ": no same-sign permutation scores; NES "
                               "undefined");
    table.rows.push_back(std::move(row));
  }

  std::vector<double> p;
  p.reserve(table.rows.size());
  for (const auto& r : table.rows) p.push_back(r.raw_p);
  const auto adj = adjust_bh(p);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    table.rows[i].adjusted_p = adj[i];
  return table;
}

// ---------------------------------------------------------------------------
// PADOG
// ---------------------------------------------------------------------------

/// Membership-frequency weights: w_g = 1 + sqrt((f_max - f_g)/(f_max -
/// f_min)), w = 1 when all frequencies are equal. Genes outside every set
/// keep weight 1 (they are never scored). Weights depend only on the
/// database.
inline std::vector<double> padog_weights(const GeneSetDatabase& db,
                                         const std::vector<GeneId>& gene_ids) {
  int f_min = 0, f_max = 0;
  bool first = true;
  for (const auto& [g, f] : db.membership_counts()) {
    (void)g;
    if (first) {
      f_min = f_max = f;
      first = false;
    } else {
      f_min = std::min(f_min, f);
      f_max = std::max(f_max, f);
    }
  }
  std::vector<double> w(gene_ids.size(), 1.0);
  for (std::size_t i = 0; i < gene_ids.size(); ++i) {
    const int f = db.membership_count(gene_ids[i]);
    if (f <= 0 || f_max == f_min) continue;
    w[i] = 1.0 + std::sqrt(static_cast<double>(f_max - f) /
                           static_cast<double>(f_max - f_min));
  }
  return w;
}

/// Weighted mean of absolute moderated t-statistics with database-derived
/// weights; per permutation the raw scores are standardized across gene
/// sets, and p compares the observed standardized score to the permuted
/// ones. adjusted_p is left NaN: the caller applies multiple-testing
/// adjustment explicitly.
inline EnrichmentResultTable padog_test(const TransformedMatrix& tm,
                                        const PhenotypeLabels& ph,
                                        const GeneSetDatabase& db,
                                        const AnalysisConfig& config,
                                        double prior_df = 4.0) {
  config.validate();
  if (ph.sample_ids() != tm.sample_ids)
    throw ValidationError("phenotype sample IDs do not match matrix");
  if (ph.m0() < 2 || ph.m1() < 2)
    throw ValidationError("padog needs groups of size >= 2");
  if (db.size() < 2)
    throw ValidationError(
        "padog standardizes scores across gene sets; provide at least 2 "
        "gene sets");

  const std::size_t n = tm.n_genes();
  const std::vector<double> gene_weight = padog_weights(db, tm.gene_ids);

  // Member gene indices per set, in ranking-independent matrix order.
  std::vector<std::vector<std::size_t>> members(db.size());
  {
    std::unordered_map<GeneId, std::size_t> index;
    index.reserve(n);
    for (std::size_t i = 0; i < n; ++i) index[tm.gene_ids[i]] = i;
    for (std::size_t si = 0; si < db.size(); ++si) {
      for (const auto& g : db.sets()[si].members()) {
        auto it = index.find(g);
        if (it != index.end()) members[si].push_back(it->second);
      }
      std::sort(members[si].begin(), members[si].end());
      if (members[si].empty())
        throw ValidationError("padog: set " + db.sets()[si].name() +
                              " has no measured genes");
    }
  }

  GroupStatsEngine engine(tm);
  auto raw_scores = [&](const std::vector<int>& labels) {
    const auto gs = engine.compute(labels);
    const auto t = moderated_t_values(gs, prior_df);
    std::vector<double> scores(db.size());
    for (std::size_t si = 0; si < db.size(); ++si) {
      double s = 0.0;
      for (auto gi : members[si]) s += gene_weight[gi] * std::fabs(t[gi]);
      scores[si] = s / static_cast<double>(members[si].size());
    }
    return scores;
  };
  auto standardize = [](std::vector<double> scores) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double q = 0.0;
    for (double s : scores) q += (s - mean) * (s - mean);
    const double sd = std::sqrt(q / static_cast<double>(scores.size() - 1));
    for (double& s : scores) s = sd > 0.0 ? (s - mean) / sd : 0.0;
    return scores;
  };

  const auto observed_raw = raw_scores(ph.labels());
  const auto observed = standardize(observed_raw);

  detail::LabelPermuter permuter(ph);
  std::vector<std::vector<double>> perm_std(
      static_cast<std::size_t>(config.n_permutations));
  parallel_for(perm_std.size(), config.workers, [&](std::size_t i) {
    perm_std[i] = standardize(raw_scores(permuter.labels_for(config.seed, i)));
  });

  EnrichmentResultTable table;
  table.method = "padog";
  table.seed = config.seed;
  table.adjustment = "none";
  detail::warn_if_too_many_label_arrangements(ph, config.n_permutations,
                                              &table.warnings);
  for (std::size_t si = 0; si < db.size(); ++si) {
    long extreme = 0;
    for (const auto& ps : perm_std)
      if (ps[si] >= observed[si]) ++extreme;
    EnrichmentRow row;
    row.set_name = db.sets()[si].name();
    row.set_size_used = static_cast<int>(members[si].size());
    row.score = observed_raw[si];
    row.norm_score = observed[si];
    row.raw_p = (1.0 + static_cast<double>(extreme)) /
                (1.0 + static_cast<double>(config.n_permutations));
    row.scheme = to_string(PermScheme::kPhenotype);
    row.n_perm = config.n_permutations;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace gsatk
