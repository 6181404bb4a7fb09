#pragma once

// Per-gene two-group statistics on the transformed matrix, gene-level
// statistics for ranking, and DE calling. Group means and standard
// deviations are accumulated in value-sorted order so results do not depend
// on sample column order or on how permuted labels assign samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gsatk/error.hpp"
#include "gsatk/preprocess.hpp"
#include "gsatk/stats.hpp"
#include "gsatk/types.hpp"

namespace gsatk {

/// Standard-deviation floor keeping statistics finite for constant genes.
inline constexpr double kSdFloor = 1e-8;

struct GroupSummaryRow {
  double mean0 = 0.0, mean1 = 0.0;
  double sd0 = 0.0, sd1 = 0.0;  // sample standard deviation (m-1)
};

struct GroupSummaryTable {
  std::vector<GeneId> gene_ids;
  std::vector<GroupSummaryRow> rows;
  std::size_t m0 = 0, m1 = 0;
};

/// Precomputes a per-gene value-sorted sample order so per-permutation group
/// summaries are cheap and independent of evaluation order.
class GroupStatsEngine {
 public:
  explicit GroupStatsEngine(const TransformedMatrix& tm) : tm_(&tm) {
    const std::size_t n = tm.n_genes(), p = tm.n_samples();
    sorted_idx_.resize(n * p);
    for (std::size_t i = 0; i < n; ++i) {
      auto* idx = sorted_idx_.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) idx[j] = static_cast<int>(j);
      const double* row = tm.values.data() + i * p;
      std::sort(idx, idx + p,
                [row](int a, int b) { return row[a] < row[b]; });
    }
  }

  /// Group summaries for an arbitrary 0/1 label vector over the sample axis.
  GroupSummaryTable compute(const std::vector<int>& labels) const {
    const std::size_t n = tm_->n_genes(), p = tm_->n_samples();
    if (labels.size() != p)
      throw ValidationError("labels do not match sample axis");
    std::size_t m1 = 0;
    for (int l : labels) m1 += static_cast<std::size_t>(l);
    const std::size_t m0 = p - m1;
    if (m0 < 2 || m1 < 2)
      throw ValidationError(
          "each phenotype group needs at least 2 samples for variance-based "
          "statistics");
    GroupSummaryTable out;
    out.gene_ids = tm_->gene_ids;
    out.m0 = m0;
    out.m1 = m1;
    out.rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = tm_->values.data() + i * p;
      const int* idx = sorted_idx_.data() + i * p;
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const double v = row[idx[j]];
        if (labels[idx[j]] == 0)
          s0 += v;
        else
          s1 += v;
      }
      const double mu0 = s0 / static_cast<double>(m0);
      const double mu1 = s1 / static_cast<double>(m1);
      double q0 = 0.0, q1 = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const double v = row[idx[j]];
        if (labels[idx[j]] == 0) {
          const double d = v - mu0;
          q0 += d * d;
        } else {
          const double d = v - mu1;
          q1 += d * d;
        }
      }
      auto& r = out.rows[i];
      r.mean0 = mu0;
      r.mean1 = mu1;
      r.sd0 = std::sqrt(q0 / static_cast<double>(m0 - 1));
      r.sd1 = std::sqrt(q1 / static_cast<double>(m1 - 1));
    }
    return out;
  }

 private:
  const TransformedMatrix* tm_;
  std::vector<int> sorted_idx_;
};

inline GroupSummaryTable group_summaries(const TransformedMatrix& tm,
                                         const PhenotypeLabels& ph) {
  if (ph.sample_ids() != tm.sample_ids)
    throw ValidationError("phenotype sample IDs do not match matrix");
  return GroupStatsEngine(tm).compute(ph.labels());
}

// ---------------------------------------------------------------------------
// Gene-level statistics
// ---------------------------------------------------------------------------

enum class GeneStatKind { kSignalToNoise, kTStatistic, kDiffOfClasses };

inline const char* to_string(GeneStatKind k) {
  switch (k) {
    case GeneStatKind::kSignalToNoise: return "signal_to_noise";
    case GeneStatKind::kTStatistic: return "t_statistic";
    case GeneStatKind::kDiffOfClasses: return "diff_of_classes";
  }
  return "?";
}

/// Raw statistic values aligned to the summary table rows, group 0 minus
/// group 1 orientation.
inline std::vector<double> gene_level_statistic_values(
    const GroupSummaryTable& gs, GeneStatKind kind) {
  std::vector<double> r(gs.rows.size());
  const double m0 = static_cast<double>(gs.m0);
  const double m1 = static_cast<double>(gs.m1);
  for (std::size_t i = 0; i < gs.rows.size(); ++i) {
    const auto& row = gs.rows[i];
    const double diff = row.mean0 - row.mean1;
    const double sd0 = std::max(row.sd0, kSdFloor);
    const double sd1 = std::max(row.sd1, kSdFloor);
    switch (kind) {
      case GeneStatKind::kSignalToNoise:
        r[i] = diff / (sd0 + sd1);
        break;
      case GeneStatKind::kTStatistic:
        r[i] = diff / std::sqrt(sd0 * sd0 / m0 + sd1 * sd1 / m1);
        break;
      case GeneStatKind::kDiffOfClasses:
        r[i] = diff;
        break;
    }
  }
  return r;
}

inline RankedGeneList gene_level_statistic(const GroupSummaryTable& gs,
                                           GeneStatKind kind) {
  return RankedGeneList(gs.gene_ids, gene_level_statistic_values(gs, kind));
}

// ---------------------------------------------------------------------------
// Differential expression
// ---------------------------------------------------------------------------

/// Welch two-sample t-test on transformed values, two-sided p via Student's t
/// with Welch-Satterthwaite degrees of freedom, BH-adjusted.
inline DEResultTable welch_de(const GroupSummaryTable& gs) {
  const double m0 = static_cast<double>(gs.m0);
  const double m1 = static_cast<double>(gs.m1);
  std::vector<DEResultRow> rows(gs.rows.size());
  std::vector<double> pvals(gs.rows.size());
  for (std::size_t i = 0; i < gs.rows.size(); ++i) {
    const auto& s = gs.rows[i];
    const bool floored = s.sd0 < kSdFloor && s.sd1 < kSdFloor;
    const double v0 = std::max(s.sd0, kSdFloor) * std::max(s.sd0, kSdFloor);
    const double v1 = std::max(s.sd1, kSdFloor) * std::max(s.sd1, kSdFloor);
    const double se2 = v0 / m0 + v1 / m1;
    const double t = (s.mean0 - s.mean1) / std::sqrt(se2);
    const double df = se2 * se2 /
                      ((v0 / m0) * (v0 / m0) / (m0 - 1.0) +
                       (v1 / m1) * (v1 / m1) / (m1 - 1.0));
    auto& r = rows[i];
    r.gene_id = gs.gene_ids[i];
    r.log_fold_change = s.mean0 - s.mean1;
    r.statistic = t;
    r.p_value = student_t_two_sided_p(t, df);
    r.variance_floored = floored;
    pvals[i] = r.p_value;
  }
  const auto adj = adjust_bh(pvals);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].adjusted_p = adj[i];
  return DEResultTable(std::move(rows));
}

/// Moderated t: pooled variance shrunk toward a prior,
/// s~^2 = (d0*s0^2 + d*s^2) / (d0 + d), tested with d0 + d df.
/// When prior_var is NaN it defaults to the median pooled variance.
inline DEResultTable moderated_t(const GroupSummaryTable& gs,
                                 double prior_df = 4.0,
                                 double prior_var =
                                     std::numeric_limits<double>::quiet_NaN()) {
  if (!(prior_df > 0.0)) throw ValidationError("moderated t: d0 must be > 0");
  const double m0 = static_cast<double>(gs.m0);
  const double m1 = static_cast<double>(gs.m1);
  const double d = m0 + m1 - 2.0;
  std::vector<double> pooled(gs.rows.size());
  for (std::size_t i = 0; i < gs.rows.size(); ++i) {
    const auto& s = gs.rows[i];
    const double sd0 = std::max(s.sd0, kSdFloor);
    const double sd1 = std::max(s.sd1, kSdFloor);
    pooled[i] = ((m0 - 1.0) * sd0 * sd0 + (m1 - 1.0) * sd1 * sd1) / d;
  }
  double s0sq = prior_var;
  if (std::isnan(s0sq)) s0sq = median(pooled);
  if (!(s0sq > 0.0))
    throw ValidationError("moderated t: prior variance must be > 0");

  std::vector<DEResultRow> rows(gs.rows.size());
  std::vector<double> pvals(gs.rows.size());
  const double scale = std::sqrt(1.0 / m0 + 1.0 / m1);
  for (std::size_t i = 0; i < gs.rows.size(); ++i) {
    const auto& s = gs.rows[i];
    const double shrunk = (prior_df * s0sq + d * pooled[i]) / (prior_df + d);
    const double denom = std::max(std::sqrt(shrunk), kSdFloor) * scale;
    const double t = (s.mean0 - s.mean1) / denom;
    auto& r = rows[i];
    r.gene_id = gs.gene_ids[i];
    r.log_fold_change = s.mean0 - s.mean1;
    r.statistic = t;
    r.p_value = student_t_two_sided_p(t, prior_df + d);
    r.variance_floored = s.sd0 < kSdFloor && s.sd1 < kSdFloor;
    pvals[i] = r.p_value;
  }
  const auto adj = adjust_bh(pvals);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].adjusted_p = adj[i];
  return DEResultTable(std::move(rows));
}

/// Moderated-t values only (no p-values); the per-permutation path of PADOG.
inline std::vector<double> moderated_t_values(
    const GroupSummaryTable& gs, double prior_df = 4.0,
    double prior_var = std::numeric_limits<double>::quiet_NaN()) {
  const double m0 = static_cast<double>(gs.m0);
  const double m1 = static_cast<double>(gs.m1);
  const double d = m0 + m1 - 2.0;
  std::vector<double> pooled(gs.rows.size());
  for (std::size_t i = 0; i < gs.rows.size(); ++i) {
    const auto& s = gs.rows[i];
    const double sd0 = std::max(s.sd0, kSdFloor);
    const double sd1 = std::max(s.sd1, kSdFloor);
    pooled[i] = ((m0 - 1.0) * sd0 * sd0 + (m1 - 1.0) * sd1 * sd1) / d;
  }
  double s0sq = prior_var;
  if (std::isnan(s0sq)) s0sq = median(pooled);
  std::vector<double> t(gs.rows.size());
  const double scale = std::sqrt(1.0 / m0 + 1.0 / m1);
  for (std::size_t i = 0; i < gs.rows.size(); ++i) {
    const double shrunk = (prior_df * s0sq + d * pooled[i]) / (prior_df + d);
    const double denom = std::max(std::sqrt(shrunk), kSdFloor) * scale;
    t[i] = (gs.rows[i].mean0 - gs.rows[i].mean1) / denom;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Ranking from DE results and DE calling
// ---------------------------------------------------------------------------

/// r = -log10(p) * sign(LFC); p is clamped to the smallest positive value
/// before the log, and sign(0) = 0.
inline RankedGeneList signed_logp_ranking(const DEResultTable& de) {
  std::vector<GeneId> ids;
  std::vector<double> stats;
  ids.reserve(de.size());
  stats.reserve(de.size());
  for (const auto& r : de.rows()) {
    const double p =
        std::max(r.p_value, std::numeric_limits<double>::denorm_min());
    double sign = 0.0;
    if (r.log_fold_change > 0.0) sign = 1.0;
    if (r.log_fold_change < 0.0) sign = -1.0;
    double v = -std::log10(p) * sign;
    if (v == 0.0) v = 0.0;  // normalize -0
    ids.push_back(r.gene_id);
    stats.push_back(v);
  }
  return RankedGeneList(std::move(ids), std::move(stats));
}

struct DECall {
  std::vector<GeneId> de_list;   // adjusted p <= alpha, table order
  std::vector<GeneId> universe;  // all genes in the table, table order
};

inline DECall call_de_genes(const DEResultTable& de, double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ValidationError("alpha must lie in (0,1]");
  DECall out;
  out.universe.reserve(de.size());
  for (const auto& r : de.rows()) {
    out.universe.push_back(r.gene_id);
    if (r.adjusted_p <= alpha) out.de_list.push_back(r.gene_id);
  }
  return out;
}

}  // namespace gsatk
