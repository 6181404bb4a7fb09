#pragma once

// Shared test oracles. These deliberately recompute results through
// independent routes (exhaustive enumeration, simulation, from-scratch
// sums) rather than reusing library internals.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace testutil {

// Exhaustive hypergeometric tail: enumerate every L-subset of N items where
// the first G items are "in the set"; P(hits >= H) by counting.
inline double hypergeom_tail_enum(int N, int G, int L, int H) {
  if (L == 0) return H <= 0 ? 1.0 : 0.0;
  const std::uint32_t full = (N == 32) ? 0xFFFFFFFFu : ((1u << N) - 1u);
  const std::uint32_t set_mask = (G == 32) ? 0xFFFFFFFFu : ((1u << G) - 1u);
  (void)full;
  std::uint64_t total = 0, favorable = 0;
  // Gosper's hack over all masks with popcount == L.
  std::uint32_t mask = (1u << L) - 1u;
  const std::uint32_t limit = 1u << N;
  while (mask < limit) {
    ++total;
    if (std::popcount(mask & set_mask) >= H) ++favorable;
    const std::uint32_t c = mask & (0u - mask);
    const std::uint32_t r = mask + c;
    mask = (((r ^ mask) >> 2) / c) | r;
    if (c == 0) break;
  }
  return static_cast<double>(favorable) / static_cast<double>(total);
}

// Histogram of hit counts from the exhaustive enumeration, reused across H.
inline std::vector<std::uint64_t> hypergeom_hist_enum(int N, int G, int L) {
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(L) + 1, 0);
  const std::uint32_t set_mask = (G >= 32) ? 0xFFFFFFFFu : ((1u << G) - 1u);
  if (L == 0) {
    hist[0] = 1;
    return hist;
  }
  std::uint32_t mask = (1u << L) - 1u;
  const std::uint32_t limit = 1u << N;
  while (mask < limit) {
    hist[static_cast<std::size_t>(std::popcount(mask & set_mask))] += 1;
    const std::uint32_t c = mask & (0u - mask);
    const std::uint32_t r = mask + c;
    mask = (((r ^ mask) >> 2) / c) | r;
  }
  return hist;
}

// Biased-urn simulation: n sequential draws without replacement, the m1
// weighted items carry odds omega. Returns the histogram of weighted-item
// draws over `replicates` runs.
inline std::vector<std::uint64_t> wallenius_sim_hist(long m1, long m2, long n,
                                                     double omega,
                                                     long replicates,
                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(n) + 1, 0);
  for (long r = 0; r < replicates; ++r) {
    long red = m1, white = m2, hits = 0;
    for (long d = 0; d < n; ++d) {
      const double wred = omega * static_cast<double>(red);
      const double wall = wred + static_cast<double>(white);
      if (unif(rng) * wall < wred) {
        ++hits;
        --red;
      } else {
        --white;
      }
    }
    hist[static_cast<std::size_t>(hits)] += 1;
  }
  return hist;
}

// From-scratch enrichment-score evaluation: at every step l the sums are
// recomputed from position 0, term by term.
inline double naive_es(const std::vector<double>& values,
                       const std::vector<bool>& is_hit, double p_exp) {
  const std::size_t n = values.size();
  std::size_t g = 0;
  for (bool h : is_hit) g += h ? 1 : 0;
  auto weight = [&](double v) {
    const double a = std::fabs(v);
    if (p_exp == 1.0) return a;
    if (p_exp == 0.0) return 1.0;
    if (p_exp == 2.0) return a * a;
    if (p_exp == 1.5) return a * std::sqrt(a);
    return std::pow(a, p_exp);
  };
  double n_r = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (is_hit[i]) n_r += weight(values[i]);
  double best = 0.0, best_abs = -1.0;
  for (std::size_t l = 0; l < n; ++l) {
    double p_hit = 0.0, p_miss = 0.0;
    for (std::size_t i = 0; i <= l; ++i) {
      if (is_hit[i])
        p_hit += weight(values[i]) / n_r;
      else
        p_miss += 1.0 / static_cast<double>(n - g);
    }
    const double diff = p_hit - p_miss;
    if (std::fabs(diff) > best_abs) {
      best_abs = std::fabs(diff);
      best = diff;
    }
  }
  return best;
}

// Two-sample KS-style statistic: signed max deviation between the running
// fraction of hits and the running fraction of misses.
inline double ks_statistic(const std::vector<bool>& is_hit) {
  const std::size_t n = is_hit.size();
  std::size_t g = 0;
  for (bool h : is_hit) g += h ? 1 : 0;
  double f_hit = 0.0, f_miss = 0.0, best = 0.0, best_abs = -1.0;
  for (std::size_t l = 0; l < n; ++l) {
    if (is_hit[l])
      f_hit += 1.0 / static_cast<double>(g);
    else
      f_miss += 1.0 / static_cast<double>(n - g);
    const double diff = f_hit - f_miss;
    if (std::fabs(diff) > best_abs) {
      best_abs = std::fabs(diff);
      best = diff;
    }
  }
  return best;
}

// Literal step-up definition: q_(i) = min(1, min_{k >= i} p_(k) * m / k),
// scanning k for every i.
inline std::vector<double> bh_direct(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] < p[b];
    return a < b;
  });
  std::vector<double> q(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t k = i; k < m; ++k) {
      const double cand =
          p[order[k]] * static_cast<double>(m) / static_cast<double>(k + 1);
      best = std::min(best, cand);
    }
    q[order[i]] = std::min(1.0, best);
  }
  return q;
}

// Closed-form two-sided Student-t p for df = 2.
inline double t_two_sided_df2(double t) {
  const double a = std::fabs(t);
  return 1.0 - a / std::sqrt(2.0 + a * a);
}

// Closed-form two-sided Student-t p for df = 1 (Cauchy).
inline double t_two_sided_df1(double t) {
  return 1.0 - 2.0 / M_PI * std::atan(std::fabs(t));
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation (text form, ready for the parsers)
// ---------------------------------------------------------------------------

struct SyntheticData {
  std::string counts_tsv;
  std::string phenotype_tsv;
  std::string gmt;
  std::string lengths_tsv;
  std::vector<std::string> set_names;
  std::string planted_set;
};

// Poisson counts with log-uniform baseline means. Genes of the planted set
// get their group-1 mean multiplied so the expected log2 shift is
// `shift_sds` pooled standard deviations (delta method on the Poisson
// log2 scale).
inline SyntheticData make_synthetic(int n_genes, int per_group, int n_sets,
                                    int genes_per_set, int planted_set_index,
                                    double shift_sds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SyntheticData d;

  const int p = 2 * per_group;
  std::string header = "gene_id";
  for (int j = 0; j < p; ++j) header += "\ts" + std::to_string(j + 1);
  d.counts_tsv = header + "\n";
  d.phenotype_tsv.clear();
  for (int j = 0; j < p; ++j)
    d.phenotype_tsv +=
        "s" + std::to_string(j + 1) + "\t" + (j < per_group ? "0" : "1") + "\n";

  std::vector<std::vector<int>> sets(n_sets);
  for (int s = 0; s < n_sets; ++s)
    for (int k = 0; k < genes_per_set; ++k) {
      const int g = s * genes_per_set + k;
      if (g < n_genes) sets[s].push_back(g);
    }

  std::vector<bool> planted(n_genes, false);
  if (planted_set_index >= 0)
    for (int g : sets[planted_set_index]) planted[g] = true;

  for (int g = 0; g < n_genes; ++g) {
    const double lambda = 50.0 * std::pow(10.0, unif(rng));  // 50..500
    const double sd_log2 = 1.4426950408889634 / std::sqrt(lambda);
    const double fold =
        planted[g] ? std::exp2(shift_sds * sd_log2) : 1.0;
    d.counts_tsv += "g" + std::to_string(g + 1);
    for (int j = 0; j < p; ++j) {
      const double mean = j < per_group ? lambda : lambda * fold;
      std::poisson_distribution<long> pois(mean);
      d.counts_tsv += "\t" + std::to_string(pois(rng));
    }
    d.counts_tsv += "\n";
    d.lengths_tsv += "g" + std::to_string(g + 1) + "\t" +
                     std::to_string(200 + (g * 37) % 5000) + "\n";
  }

  for (int s = 0; s < n_sets; ++s) {
    const std::string name = "SET" + std::to_string(s + 1);
    d.set_names.push_back(name);
    d.gmt += name + "\tsynthetic set";
    for (int g : sets[s]) d.gmt += "\tg" + std::to_string(g + 1);
    d.gmt += "\n";
  }
  if (planted_set_index >= 0) d.planted_set = d.set_names[planted_set_index];
  return d;
}

}  // namespace testutil
