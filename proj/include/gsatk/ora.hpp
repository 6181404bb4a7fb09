#pragma once

// Over-representation analysis: classic Fisher ORA, the EASE modification
// (one member hit removed from the table), and bias-aware ORA with a
// probability weighting function (Wallenius odds, weighted resampling, or
// the plain hypergeometric fallback).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gsatk/error.hpp"
#include "gsatk/rng.hpp"
#include "gsatk/stats.hpp"
#include "gsatk/types.hpp"

namespace gsatk {

/// 2x2 table of gene-set membership vs differential expression, counted
/// within the universe.
struct ContingencyTable {
  long universe_size = 0;  // N
  long set_size = 0;       // G
  long de_size = 0;        // L
  long hits = 0;           // H

  void validate() const {
    if (universe_size < 0 || set_size < 0 || de_size < 0 || hits < 0)
      throw ValidationError("contingency table: negative cell");
    if (set_size > universe_size || de_size > universe_size)
      throw ValidationError("contingency table: margins exceed universe");
    if (hits > std::min(set_size, de_size))
      throw ValidationError("contingency table: H exceeds min(G, L)");
    // remaining cell: N - L - (G - H) >= 0
    if (universe_size - de_size - (set_size - hits) < 0)
      throw ValidationError("contingency table: inconsistent margins");
  }
};

inline const char* to_string(UniversePolicy p) {
  switch (p) {
    case UniversePolicy::kExperiment: return "experiment";
    case UniversePolicy::kAnnotated: return "annotated";
    case UniversePolicy::kIntersection: return "intersection";
  }
  return "?";
}

/// Background gene population for the hypergeometric model.
inline std::vector<GeneId> build_universe(const std::vector<GeneId>& measured,
                                          const GeneSetDatabase& db,
                                          UniversePolicy policy) {
  std::vector<GeneId> out;
  switch (policy) {
    case UniversePolicy::kExperiment:
      out = measured;
      break;
    case UniversePolicy::kAnnotated:
      out = db.annotated_genes();
      break;
    case UniversePolicy::kIntersection: {
      const auto& counts = db.membership_counts();
      for (const auto& g : measured)
        if (counts.count(g)) out.push_back(g);
      break;
    }
  }
  if (out.empty()) throw ValidationError("universe is empty");
  return out;
}

namespace detail {

struct OraCounts {
  std::unordered_set<GeneId> universe;
  std::unordered_set<GeneId> de;
  long N = 0, L = 0;
};

inline OraCounts ora_counts(const std::vector<GeneId>& de_list,
                            const std::vector<GeneId>& universe) {
  OraCounts c;
  c.universe.insert(universe.begin(), universe.end());
  for (const auto& g : de_list)
    if (c.universe.count(g)) c.de.insert(g);
  c.N = static_cast<long>(c.universe.size());
  c.L = static_cast<long>(c.de.size());
  if (c.N == 0) throw ValidationError("universe is empty");
  return c;
}

inline ContingencyTable set_table(const GeneSet& s, const OraCounts& c) {
  long g = 0, h = 0;
  for (const auto& gene : s.members()) {
    if (!c.universe.count(gene)) continue;
    ++g;
    if (c.de.count(gene)) ++h;
  }
  ContingencyTable t{c.N, g, c.L, h};
  t.validate();
  return t;
}

inline void finish_ora_table(EnrichmentResultTable& table) {
  std::vector<double> p;
  p.reserve(table.rows.size());
  for (const auto& r : table.rows) p.push_back(r.raw_p);
  const auto adj = adjust_bh(p);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    table.rows[i].adjusted_p = adj[i];
}

}  // namespace detail

/// Fisher / hypergeometric ORA. Genes outside the universe are ignored on
/// both sides before counting.
inline EnrichmentResultTable ora_fisher(const std::vector<GeneId>& de_list,
                                        const std::vector<GeneId>& universe,
                                        const GeneSetDatabase& db) {
  auto counts = detail::ora_counts(de_list, universe);
  EnrichmentResultTable table;
  table.method = "ora_fisher";
  if (counts.L == 0)
    table.warnings.push_back(
        "no differentially expressed genes in the universe; all p = 1");
  for (const auto& s : db.sets()) {
    const auto t = detail::set_table(s, counts);
    EnrichmentRow row;
    row.set_name = s.name();
    row.universe_size = t.universe_size;
    row.set_in_universe = t.set_size;
    row.de_in_universe = t.de_size;
    row.hits = t.hits;
    row.set_size_used = static_cast<int>(t.set_size);
    row.score = static_cast<double>(t.hits);
    row.raw_p = counts.L == 0
                    ? 1.0
                    : hypergeom_tail(t.universe_size, t.set_size, t.de_size,
                                     t.hits);
    table.rows.push_back(std::move(row));
  }
  detail::finish_ora_table(table);
  return table;
}

/// EASE score: the tail is evaluated with one member hit removed
/// (population N, set G, draws L-1, hits H-1); sets with H = 0 get p = 1.
/// Singleton sets can never reach significance.
inline EnrichmentResultTable ora_ease(const std::vector<GeneId>& de_list,
                                      const std::vector<GeneId>& universe,
                                      const GeneSetDatabase& db) {
  auto counts = detail::ora_counts(de_list, universe);
  EnrichmentResultTable table;
  table.method = "ora_ease";
  if (counts.L == 0)
    table.warnings.push_back(
        "no differentially expressed genes in the universe; all p = 1");
  for (const auto& s : db.sets()) {
    const auto t = detail::set_table(s, counts);
    EnrichmentRow row;
    row.set_name = s.name();
    row.universe_size = t.universe_size;
    row.set_in_universe = t.set_size;
    row.de_in_universe = t.de_size;
    row.hits = t.hits;
    row.set_size_used = static_cast<int>(t.set_size);
    row.score = static_cast<double>(t.hits);
    row.raw_p = t.hits < 1 ? 1.0
                           : hypergeom_tail(t.universe_size, t.set_size,
                                            t.de_size - 1, t.hits - 1);
    table.rows.push_back(std::move(row));
  }
  detail::finish_ora_table(table);
  return table;
}

// ---------------------------------------------------------------------------
// Probability weighting function (GOSeq)
// ---------------------------------------------------------------------------

enum class BiasKind { kLength, kTotalCount };

inline const char* to_string(BiasKind b) {
  return b == BiasKind::kLength ? "length" : "total_count";
}

/// Per-gene detection probability as a monotone non-decreasing function of a
/// bias covariate, clamped to [1e-4, 1 - 1e-4].
struct ProbabilityWeightingFunction {
  std::vector<GeneId> gene_ids;
  std::vector<double> weights;
  BiasKind bias = BiasKind::kLength;

  double weight(const GeneId& g) const {
    for (std::size_t i = 0; i < gene_ids.size(); ++i)
      if (gene_ids[i] == g) return weights[i];
    throw ValidationError("pwf: unknown gene " + g);
  }
};

/// Isotonic regression (pool adjacent violators) of the DE indicator on the
/// covariate. Genes sharing a covariate value are pooled into one block
/// before fitting.
inline ProbabilityWeightingFunction fit_pwf(
    const std::vector<GeneId>& genes, const std::vector<int>& de_flags,
    const std::vector<double>& covariate, BiasKind bias) {
  const std::size_t n = genes.size();
  if (de_flags.size() != n || covariate.size() != n)
    throw ValidationError("pwf: input lengths differ");
  if (n == 0) throw ValidationError("pwf: no genes");
  for (double c : covariate)
    if (!std::isfinite(c))
      throw ValidationError("pwf: missing or non-finite covariate value");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (covariate[a] != covariate[b]) return covariate[a] < covariate[b];
    return genes[a] < genes[b];
  });

  // Blocks over tied covariate values.
  struct Block {
    double sum;
    double count;
    std::size_t first, last;  // index range into `order`
  };
  std::vector<Block> blocks;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < n && covariate[order[j]] == covariate[order[i]]) {
      sum += static_cast<double>(de_flags[order[j]]);
      ++j;
    }
    blocks.push_back({sum, static_cast<double>(j - i), i, j - 1});
    i = j;
  }

  // Pool adjacent violators.
  std::vector<Block> stack;
  for (auto b : blocks) {
    stack.push_back(b);
    while (stack.size() >= 2) {
      auto& top = stack[stack.size() - 1];
      auto& below = stack[stack.size() - 2];
      if (below.sum / below.count <= top.sum / top.count) break;
      below.sum += top.sum;
      below.count += top.count;
      below.last = top.last;
      stack.pop_back();
    }
  }

  ProbabilityWeightingFunction pwf;
  pwf.bias = bias;
  pwf.gene_ids = genes;
  pwf.weights.resize(n);
  for (const auto& b : stack) {
    const double fitted =
        std::min(1.0 - 1e-4, std::max(1e-4, b.sum / b.count));
    for (std::size_t k = b.first; k <= b.last; ++k)
      pwf.weights[order[k]] = fitted;
  }
  return pwf;
}

// ---------------------------------------------------------------------------
// GOSeq-style bias-aware ORA
// ---------------------------------------------------------------------------

enum class GoseqMethod { kWallenius, kResampling, kHypergeometric };

inline const char* to_string(GoseqMethod m) {
  switch (m) {
    case GoseqMethod::kWallenius: return "wallenius";
    case GoseqMethod::kResampling: return "resampling";
    case GoseqMethod::kHypergeometric: return "hypergeometric";
  }
  return "?";
}

/// Bias-aware ORA. Wallenius: per-set odds = mean weight inside the set over
/// mean weight outside. Resampling: weighted draws of L genes, smoothed
/// p = (1 + hits) / (1 + n_resamples). Hypergeometric: delegates to Fisher
/// with a warning. Raw and BH-adjusted p are both reported; the adjustment
/// is an explicit final pass.
inline EnrichmentResultTable ora_goseq(const std::vector<GeneId>& de_list,
                                       const std::vector<GeneId>& universe,
                                       const GeneSetDatabase& db,
                                       const ProbabilityWeightingFunction& pwf,
                                       GoseqMethod method,
                                       const AnalysisConfig& config = {}) {
  if (method == GoseqMethod::kHypergeometric) {
    auto table = ora_fisher(de_list, universe, db);
    table.method = "goseq_hypergeometric";
    table.warnings.push_back(
        "the plain hypergeometric distribution ignores detection bias; "
        "prefer the wallenius or resampling method");
    return table;
  }

  if (pwf.gene_ids.size() != universe.size())
    throw ValidationError("pwf must be fitted on the universe");
  std::unordered_map<GeneId, double> weight;
  weight.reserve(universe.size());
  for (std::size_t i = 0; i < pwf.gene_ids.size(); ++i)
    weight[pwf.gene_ids[i]] = pwf.weights[i];
  for (const auto& g : universe)
    if (!weight.count(g))
      throw ValidationError("pwf missing universe gene " + g);

  auto counts = detail::ora_counts(de_list, universe);
  EnrichmentResultTable table;
  table.method = method == GoseqMethod::kWallenius ? "goseq_wallenius"
                                                   : "goseq_resampling";
  table.seed = config.seed;
  if (counts.L == 0)
    table.warnings.push_back(
        "no differentially expressed genes in the universe; all p = 1");

  // Universe in a fixed order for resampling.
  std::vector<const GeneId*> ordered;
  ordered.reserve(universe.size());
  {
    std::unordered_set<GeneId> seen;
    for (const auto& g : universe)
      if (seen.insert(g).second) ordered.push_back(&g);
  }
  const std::size_t n_univ = ordered.size();

  for (std::size_t si = 0; si < db.sets().size(); ++si) {
    const auto& s = db.sets()[si];
    const auto t = detail::set_table(s, counts);
    EnrichmentRow row;
    row.set_name = s.name();
    row.universe_size = t.universe_size;
    row.set_in_universe = t.set_size;
    row.de_in_universe = t.de_size;
    row.hits = t.hits;
    row.set_size_used = static_cast<int>(t.set_size);
    row.score = static_cast<double>(t.hits);

    if (counts.L == 0) {
      row.raw_p = 1.0;
      table.rows.push_back(std::move(row));
      continue;
    }

    if (method == GoseqMethod::kWallenius) {
      double in_sum = 0.0, out_sum = 0.0;
      long in_n = 0, out_n = 0;
      for (const auto* g : ordered) {
        const double w = weight.at(*g);
        if (s.contains(*g)) {
          in_sum += w;
          ++in_n;
        } else {
          out_sum += w;
          ++out_n;
        }
      }
      if (out_n == 0) {
        // Set covers the whole universe; every DE gene is a hit.
        row.odds = 1.0;
        row.raw_p = 1.0;
      } else {
        const double omega = (in_sum / static_cast<double>(in_n)) /
                             (out_sum / static_cast<double>(out_n));
        row.odds = omega;
        row.raw_p = wallenius_tail(
            WalleniusParams{t.set_size, t.universe_size - t.set_size,
                            t.de_size, omega},
            t.hits);
      }
    } else {
      // Weighted resampling; stream index = set index so per-set work can
      // run on any worker without changing results.
      RngStream stream(config.seed, si);
      const std::size_t L = static_cast<std::size_t>(t.de_size);
      long at_least = 0;
      std::vector<std::pair<double, std::size_t>> keys(n_univ);
      for (int it = 0; it < config.n_resamples; ++it) {
        // Efraimidis-Spirakis: top-L keys log(u)/w ~ weighted sampling
        // without replacement.
        for (std::size_t gi = 0; gi < n_univ; ++gi) {
          const double u = stream.next_open_double();
          keys[gi] = {std::log(u) / weight.at(*ordered[gi]), gi};
        }
        std::partial_sort(
            keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(L),
            keys.end(), [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
        long hits = 0;
        for (std::size_t k = 0; k < L; ++k)
          if (s.contains(*ordered[keys[k].second])) ++hits;
        if (hits >= t.hits) ++at_least;
      }
      row.raw_p = (1.0 + static_cast<double>(at_least)) /
                  (1.0 + static_cast<double>(config.n_resamples));
    }
    table.rows.push_back(std::move(row));
  }
  detail::finish_ora_table(table);
  return table;
}

}  // namespace gsatk
