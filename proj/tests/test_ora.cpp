#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gsatk/ora.hpp"
#include "gsatk/stats.hpp"

using namespace gsatk;

namespace {

GeneSetDatabase make_db(
    std::vector<std::pair<std::string, std::vector<GeneId>>> defs) {
  std::vector<GeneSet> sets;
  for (auto& [name, members] : defs)
    sets.emplace_back(name, "", std::move(members));
  return GeneSetDatabase(std::move(sets));
}

std::vector<GeneId> genes(int n, const std::string& prefix = "g") {
  std::vector<GeneId> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

TEST(BuildUniverse, AllThreePolicies) {
  const std::vector<GeneId> measured = {"g1", "g2", "g3"};
  auto db = make_db({{"A", {"g2", "g3", "g4"}}});
  EXPECT_EQ(build_universe(measured, db, UniversePolicy::kIntersection),
            (std::vector<GeneId>{"g2", "g3"}));
  EXPECT_EQ(build_universe(measured, db, UniversePolicy::kExperiment),
            measured);
  EXPECT_EQ(build_universe(measured, db, UniversePolicy::kAnnotated),
            (std::vector<GeneId>{"g2", "g3", "g4"}));
  auto disjoint = make_db({{"A", {"x1"}}});
  EXPECT_THROW(
      build_universe(measured, disjoint, UniversePolicy::kIntersection),
      ValidationError);
}

TEST(OraFisher, SpecExamples) {
  const auto universe = genes(10);
  auto db = make_db({{"A", {"g1", "g2", "g3"}}});
  // H = 3 of the set inside a DE list of 4.
  const auto t =
      ora_fisher({"g1", "g2", "g3", "g4"}, universe, db);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].hits, 3);
  EXPECT_NEAR(t.rows[0].raw_p, 7.0 / 210.0, 1e-12);

  // H = 0
  const auto t0 = ora_fisher({"g9", "g10"}, universe, db);
  EXPECT_EQ(t0.rows[0].hits, 0);
  EXPECT_EQ(t0.rows[0].raw_p, 1.0);

  // DE list = universe forces full overlap and p = 1.
  const auto tfull = ora_fisher(universe, universe, db);
  EXPECT_EQ(tfull.rows[0].hits, 3);
  EXPECT_EQ(tfull.rows[0].raw_p, 1.0);
}

TEST(OraFisher, EmptyDeListWarnsWithUnitPValues) {
  const auto universe = genes(6);
  auto db = make_db({{"A", {"g1", "g2"}}, {"B", {"g3", "g4"}}});
  const auto t = ora_fisher({}, universe, db);
  EXPECT_FALSE(t.warnings.empty());
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.raw_p, 1.0);
    EXPECT_EQ(r.adjusted_p, 1.0);
  }
}

TEST(OraFisher, GenesOutsideUniverseDropped) {
  const auto universe = genes(8);
  auto db = make_db({{"A", {"g1", "g2", "nope1", "nope2"}}});
  const auto t = ora_fisher({"g1", "stray"}, universe, db);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].set_in_universe, 2);
  EXPECT_EQ(t.rows[0].de_in_universe, 1);
  EXPECT_EQ(t.rows[0].hits, 1);
  EXPECT_LE(t.rows[0].hits,
            std::min(t.rows[0].set_in_universe, t.rows[0].de_in_universe));
}

TEST(OraFisher, InvariantUnderGeneRelabeling) {
  const auto t1 = ora_fisher({"g1", "g2"}, genes(10),
                             make_db({{"A", {"g1", "g2", "g3"}}}));
  const auto t2 = ora_fisher({"x1", "x2"}, genes(10, "x"),
                             make_db({{"A", {"x1", "x2", "x3"}}}));
  EXPECT_EQ(t1.rows[0].raw_p, t2.rows[0].raw_p);
}

TEST(OraEase, SpecExamplesAndDominance) {
  const auto universe = genes(10);
  // Singleton set with its gene in the DE list: EASE precludes significance.
  auto singleton = make_db({{"S", {"g1"}}});
  const auto ts = ora_ease({"g1", "g2"}, universe, singleton);
  EXPECT_EQ(ts.rows[0].raw_p, 1.0);

  // N=10, G=3, L=4, H=3: tail at H-1=2 with draws L-1=3 -> 22/120.
  auto db = make_db({{"A", {"g1", "g2", "g3"}}});
  const auto te = ora_ease({"g1", "g2", "g3", "g4"}, universe, db);
  EXPECT_NEAR(te.rows[0].raw_p, 22.0 / 120.0, 1e-12);

  // Dominance over random valid tables.
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 1000; ++rep) {
    const long N = 2 + static_cast<long>(rng() % 40);
    const long G = 1 + static_cast<long>(rng() % N);
    const long L = static_cast<long>(rng() % (N + 1));
    const long hmin = std::max(0L, L - (N - G));
    const long hmax = std::min(G, L);
    const long H = hmin + static_cast<long>(
        hmax > hmin ? rng() % static_cast<unsigned long>(hmax - hmin + 1) : 0);
    const double p_fisher = hypergeom_tail(N, G, L, H);
    const double p_ease =
        H < 1 ? 1.0 : hypergeom_tail(N, G, L - 1, H - 1);
    EXPECT_GE(p_ease + 1e-12, p_fisher)
        << "N=" << N << " G=" << G << " L=" << L << " H=" << H;
  }
}

TEST(FitPwf, ConstantStepAndTiedCovariates) {
  // Constant flags: fitted value is the clamped constant.
  const auto c0 = fit_pwf(genes(4), {0, 0, 0, 0}, {1, 2, 3, 4},
                          BiasKind::kLength);
  for (double w : c0.weights) EXPECT_EQ(w, 1e-4);
  const auto c1 = fit_pwf(genes(4), {1, 1, 1, 1}, {1, 2, 3, 4},
                          BiasKind::kLength);
  for (double w : c1.weights) EXPECT_EQ(w, 1.0 - 1e-4);

  // Perfectly sorted flags: a step function at the boundary.
  const auto step = fit_pwf(genes(6), {0, 0, 0, 1, 1, 1},
                            {1, 2, 3, 4, 5, 6}, BiasKind::kLength);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(step.weights[i], 1e-4);
  for (int i = 3; i < 6; ++i) EXPECT_EQ(step.weights[i], 1.0 - 1e-4);

  // Equal covariates are pooled.
  const auto tied =
      fit_pwf({"a", "b"}, {0, 1}, {10.0, 10.0}, BiasKind::kLength);
  EXPECT_EQ(tied.weights[0], 0.5);
  EXPECT_EQ(tied.weights[1], 0.5);
}

TEST(FitPwf, MonotoneNonDecreasingInCovariate) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 30;
    std::vector<GeneId> ids = genes(n);
    std::vector<int> flags(n);
    std::vector<double> cov(n);
    for (int i = 0; i < n; ++i) {
      cov[i] = unif(rng) * 100.0;
      flags[i] = unif(rng) < 0.3 ? 1 : 0;
    }
    const auto pwf = fit_pwf(ids, flags, cov, BiasKind::kTotalCount);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cov[a] < cov[b]; });
    for (int i = 1; i < n; ++i)
      EXPECT_GE(pwf.weights[order[i]] + 1e-15, pwf.weights[order[i - 1]]);
    for (double w : pwf.weights) {
      EXPECT_GE(w, 1e-4);
      EXPECT_LE(w, 1.0 - 1e-4);
    }
  }
  EXPECT_THROW(
      fit_pwf(genes(2), {0, 1}, {1.0, std::nan("")}, BiasKind::kLength),
      ValidationError);
}

TEST(OraGoseq, ConstantPwfReducesToFisher) {
  const auto universe = genes(10);
  auto db = make_db({{"A", {"g1", "g2", "g3"}}});
  ProbabilityWeightingFunction pwf;
  pwf.gene_ids = universe;
  pwf.weights.assign(10, 0.5);
  const auto wall = ora_goseq({"g1", "g2", "g3", "g4"}, universe, db, pwf,
                              GoseqMethod::kWallenius);
  EXPECT_NEAR(wall.rows[0].odds, 1.0, 1e-12);
  EXPECT_NEAR(wall.rows[0].raw_p, 7.0 / 210.0, 1e-6);
}

TEST(OraGoseq, OmegaInvariantUnderPwfScaling) {
  const auto universe = genes(10);
  auto db = make_db({{"A", {"g1", "g2", "g3"}}});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.1, 0.9);
  ProbabilityWeightingFunction pwf;
  pwf.gene_ids = universe;
  for (int i = 0; i < 10; ++i) pwf.weights.push_back(unif(rng));
  auto scaled = pwf;
  for (auto& w : scaled.weights) w *= 0.5;
  const auto a = ora_goseq({"g1", "g2", "g4"}, universe, db, pwf,
                           GoseqMethod::kWallenius);
  const auto b = ora_goseq({"g1", "g2", "g4"}, universe, db, scaled,
                           GoseqMethod::kWallenius);
  EXPECT_NEAR(a.rows[0].odds, b.rows[0].odds, 1e-12 * a.rows[0].odds);
  EXPECT_NEAR(a.rows[0].raw_p, b.rows[0].raw_p, 1e-9);
}

TEST(OraGoseq, BiasedWeightsShiftPValues) {
  // Up-weighting the set members makes high overlap less surprising:
  // Wallenius p should exceed the Fisher p.
  const auto universe = genes(12);
  auto db = make_db({{"A", {"g1", "g2", "g3", "g4"}}});
  ProbabilityWeightingFunction pwf;
  pwf.gene_ids = universe;
  for (int i = 0; i < 12; ++i) pwf.weights.push_back(i < 4 ? 0.8 : 0.2);
  const auto de = std::vector<GeneId>{"g1", "g2", "g3", "g5"};
  const auto wall =
      ora_goseq(de, universe, db, pwf, GoseqMethod::kWallenius);
  const auto fisher = ora_fisher(de, universe, db);
  EXPECT_GT(wall.rows[0].odds, 1.0);
  EXPECT_GT(wall.rows[0].raw_p, fisher.rows[0].raw_p);
}

TEST(OraGoseq, ResamplingMatchesExactTailForUniformWeights) {
  const auto universe = genes(10);
  auto db = make_db({{"A", {"g1", "g2", "g3"}}});
  ProbabilityWeightingFunction pwf;
  pwf.gene_ids = universe;
  pwf.weights.assign(10, 0.5);
  AnalysisConfig config;
  config.seed = 20240;
  config.n_resamples = 2000;
  const auto t = ora_goseq({"g1", "g2", "g3", "g4"}, universe, db, pwf,
                           GoseqMethod::kResampling, config);
  const double p_exact = 7.0 / 210.0;
  const double expected =
      (1.0 + 2000.0 * p_exact) / 2001.0;
  const double se = std::sqrt(p_exact * (1.0 - p_exact) / 2000.0);
  EXPECT_NEAR(t.rows[0].raw_p, expected, 3.0 * se);
  EXPECT_GE(t.rows[0].raw_p, 1.0 / 2001.0);
  EXPECT_LE(t.rows[0].raw_p, 1.0);
}

TEST(OraGoseq, ResamplingDeterministicPerSetStream) {
  const auto universe = genes(10);
  auto db = make_db({{"A", {"g1", "g2", "g3"}}, {"B", {"g4", "g5"}}});
  ProbabilityWeightingFunction pwf;
  pwf.gene_ids = universe;
  pwf.weights.assign(10, 0.5);
  AnalysisConfig config;
  config.seed = 7;
  config.n_resamples = 200;
  const auto t1 = ora_goseq({"g1", "g4"}, universe, db, pwf,
                            GoseqMethod::kResampling, config);
  const auto t2 = ora_goseq({"g1", "g4"}, universe, db, pwf,
                            GoseqMethod::kResampling, config);
  for (std::size_t i = 0; i < t1.rows.size(); ++i)
    EXPECT_EQ(t1.rows[i].raw_p, t2.rows[i].raw_p);
}

TEST(OraGoseq, HypergeometricDelegatesToFisherWithWarning) {
  const auto universe = genes(10);
  auto db = make_db({{"A", {"g1", "g2", "g3"}}});
  ProbabilityWeightingFunction pwf;
  pwf.gene_ids = universe;
  pwf.weights.assign(10, 0.5);
  const auto t = ora_goseq({"g1", "g2", "g3", "g4"}, universe, db, pwf,
                           GoseqMethod::kHypergeometric);
  EXPECT_EQ(t.method, "goseq_hypergeometric");
  EXPECT_FALSE(t.warnings.empty());
  EXPECT_NEAR(t.rows[0].raw_p, 7.0 / 210.0, 1e-12);
}

TEST(ContingencyTable, MarginValidation) {
  ContingencyTable ok{10, 3, 4, 3};
  EXPECT_NO_THROW(ok.validate());
  ContingencyTable bad{10, 3, 4, 4};
  EXPECT_THROW(bad.validate(), ValidationError);
  ContingencyTable inconsistent{5, 5, 5, 0};
  EXPECT_THROW(inconsistent.validate(), ValidationError);
}
