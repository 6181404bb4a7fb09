#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "gsatk/rng.hpp"
#include "gsatk/stats.hpp"
#include "test_util.hpp"

using namespace gsatk;

TEST(Hypergeom, HandComputedTails) {
  // C(3,3)*C(7,1)/C(10,4) = 7/210
  EXPECT_NEAR(hypergeom_tail(10, 3, 4, 3), 7.0 / 210.0, 1e-12);
  // f(2)+f(3) = (63+7)/210 = 1/3
  EXPECT_NEAR(hypergeom_tail(10, 3, 4, 2), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(hypergeom_tail(10, 3, 4, 0), 1.0);
}

TEST(Hypergeom, MatchesEnumerationSpotChecks) {
  for (int N : {5, 8, 11}) {
    for (int G = 0; G <= N; ++G) {
      for (int L = 0; L <= N; ++L) {
        const auto hist = testutil::hypergeom_hist_enum(N, G, L);
        std::uint64_t total = 0;
        for (auto c : hist) total += c;
        for (int H = 0; H <= std::min(G, L); ++H) {
          std::uint64_t fav = 0;
          for (std::size_t h = H; h < hist.size(); ++h) fav += hist[h];
          const double expected =
              static_cast<double>(fav) / static_cast<double>(total);
          EXPECT_NEAR(hypergeom_tail(N, G, L, H), expected, 1e-12)
              << "N=" << N << " G=" << G << " L=" << L << " H=" << H;
        }
      }
    }
  }
}

TEST(Hypergeom, NonIncreasingInHAndSymmetric) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const long N = 2 + static_cast<long>(rng() % 60);
    const long G = static_cast<long>(rng() % (N + 1));
    const long L = static_cast<long>(rng() % (N + 1));
    double prev = 1.0;
    for (long H = 0; H <= std::min(G, L); ++H) {
      const double p = hypergeom_tail(N, G, L, H);
      EXPECT_LE(p, prev + 1e-12);
      EXPECT_NEAR(p, hypergeom_tail(N, L, G, H), 1e-10);
      prev = p;
    }
  }
}

TEST(Hypergeom, RejectsBadArguments) {
  EXPECT_THROW(hypergeom_tail(10, 11, 4, 0), ValidationError);
  EXPECT_THROW(hypergeom_tail(10, 3, 4, 4), ValidationError);
  EXPECT_THROW(hypergeom_tail(10, 3, 4, -1), ValidationError);
}

TEST(BinomialApprox, MatchesExactForLargeN) {
  EXPECT_EQ(hypergeom_tail_binomial_approx(1000, 10, 50, 0), 1.0);
  const double exact = hypergeom_tail(1000000, 1000, 100, 3);
  const double approx = hypergeom_tail_binomial_approx(1000000, 1000, 100, 3);
  EXPECT_NEAR(approx, exact, 1e-4);
  // G = N: every draw is a success.
  EXPECT_EQ(hypergeom_tail_binomial_approx(10, 10, 4, 3), 1.0);
}

TEST(IncBeta, ClosedFormAndSymmetry) {
  for (double x : {0.1, 0.3, 0.5, 0.8}) {
    for (double b : {0.5, 1.0, 2.5}) {
      EXPECT_NEAR(inc_beta(1.0, b, x), 1.0 - std::pow(1.0 - x, b), 1e-12);
    }
    EXPECT_NEAR(inc_beta(2.0, 3.0, x) + inc_beta(3.0, 2.0, 1.0 - x), 1.0,
                1e-12);
  }
}

TEST(StudentT, MatchesClosedForms) {
  for (double t : {0.0, 0.3, 0.7071, 1.5, 4.0, -2.2}) {
    EXPECT_NEAR(student_t_two_sided_p(t, 2.0), testutil::t_two_sided_df2(t),
                1e-12);
    EXPECT_NEAR(student_t_two_sided_p(t, 1.0), testutil::t_two_sided_df1(t),
                1e-12);
  }
  EXPECT_EQ(student_t_two_sided_p(0.0, 7.0), 1.0);
}

TEST(Wallenius, CentralCaseEqualsHypergeometric) {
  const WalleniusParams wp{5, 15, 8, 1.0};
  for (long H = 0; H <= 5; ++H)
    EXPECT_NEAR(wallenius_tail(wp, H), hypergeom_tail(20, 5, 8, H), 1e-6)
        << "H=" << H;
}

TEST(Wallenius, MatchesBiasedUrnSimulation) {
  const long replicates = 200000;
  for (double omega : {0.5, 2.0}) {
    const WalleniusParams wp{5, 15, 8, omega};
    const auto hist =
        testutil::wallenius_sim_hist(5, 15, 8, omega, replicates, 99);
    for (long H = 1; H <= 5; ++H) {
      std::uint64_t fav = 0;
      for (std::size_t h = H; h < hist.size(); ++h) fav += hist[h];
      const double p_hat =
          static_cast<double>(fav) / static_cast<double>(replicates);
      const double p = wallenius_tail(wp, H);
      const double se = std::sqrt(p * (1.0 - p) /
                                  static_cast<double>(replicates));
      EXPECT_NEAR(p_hat, p, 3.0 * se + 1e-9)
          << "omega=" << omega << " H=" << H;
    }
  }
}

TEST(Wallenius, PmfMassNearOne) {
  for (double omega : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    for (auto [m1, m2, n] :
         {std::tuple<long, long, long>{5, 15, 8},
          std::tuple<long, long, long>{3, 4, 5},
          std::tuple<long, long, long>{10, 10, 10}}) {
      const double total = wallenius_pmf_total({m1, m2, n, omega});
      EXPECT_NEAR(total, 1.0, 1e-8)
          << "omega=" << omega << " m1=" << m1 << " m2=" << m2 << " n=" << n;
    }
  }
}

TEST(Wallenius, TrivialCases) {
  EXPECT_EQ(wallenius_tail({5, 15, 8, 2.0}, 0), 1.0);
  // Full draw: every weighted item is taken.
  EXPECT_EQ(wallenius_tail({5, 15, 20, 3.0}, 5), 1.0);
  EXPECT_THROW(wallenius_tail({5, 15, 8, -1.0}, 0), ValidationError);
  EXPECT_THROW(wallenius_tail({5, 15, 8, 2.0}, 6), ValidationError);
}

TEST(Wallenius, LargeInstanceStaysFinite) {
  // GOSeq-scale parameters must not overflow or stall.
  const WalleniusParams wp{200, 9800, 500, 1.7};
  const double p = wallenius_tail(wp, 20);
  EXPECT_GE(p, 0.0);
  EXPECT_LE(p, 1.0);
  const double p_hi = wallenius_tail(wp, 40);
  EXPECT_LE(p_hi, p);
}

TEST(AdjustBh, HandComputedExamples) {
  const auto q1 = adjust_bh({0.01, 0.02, 0.03});
  EXPECT_NEAR(q1[0], 0.03, 1e-15);
  EXPECT_NEAR(q1[1], 0.03, 1e-15);
  EXPECT_NEAR(q1[2], 0.03, 1e-15);
  const auto q2 = adjust_bh({0.5});
  EXPECT_EQ(q2[0], 0.5);
  const auto q3 = adjust_bh({0.04, 1.0});
  EXPECT_NEAR(q3[0], 0.08, 1e-15);
  EXPECT_EQ(q3[1], 1.0);
}

TEST(AdjustBh, MatchesDirectDefinitionAndDominatesRaw) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(1 + rng() % 40);
    for (auto& v : p) v = unif(rng);
    const auto q = adjust_bh(p);
    const auto expected = testutil::bh_direct(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(q[i], expected[i], 1e-14);
      EXPECT_GE(q[i] + 1e-15, p[i]);
    }
  }
  EXPECT_THROW(adjust_bh({0.5, 1.5}), ValidationError);
}

TEST(AdjustBonferroni, Examples) {
  const auto q = adjust_bonferroni({0.01, 0.2});
  EXPECT_NEAR(q[0], 0.02, 1e-15);
  EXPECT_NEAR(q[1], 0.4, 1e-15);
  const auto q2 = adjust_bonferroni({0.9, 0.9});
  EXPECT_EQ(q2[0], 1.0);
  EXPECT_EQ(q2[1], 1.0);
  const auto q3 = adjust_bonferroni({0.123});
  EXPECT_EQ(q3[0], 0.123);
}

TEST(Rng, DeterminismAndTrivialPermutation) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c(42, 8);
  EXPECT_NE(RngStream(42, 7).next_u64(), c.next_u64());
  RngStream s(1, 0);
  const auto p1 = permute(s, 1);
  ASSERT_EQ(p1.size(), 1u);
  EXPECT_EQ(p1[0], 0u);
}

TEST(Rng, PermutationUniformity) {
  std::map<std::vector<std::size_t>, long> counts;
  const long n_draws = 100000;
  for (long i = 0; i < n_draws; ++i) {
    RngStream s(2024, static_cast<std::uint64_t>(i));
    counts[permute(s, 3)] += 1;
  }
  EXPECT_EQ(counts.size(), 6u);
  const double expected = n_draws / 6.0;
  const double se = std::sqrt(n_draws * (1.0 / 6.0) * (5.0 / 6.0));
  for (const auto& [perm, c] : counts)
    EXPECT_NEAR(static_cast<double>(c), expected, 3.0 * se);
}

TEST(Rng, SampleWithoutReplacement) {
  RngStream s(5, 1);
  auto sample = sample_without_replacement(s, 10, 4);
  ASSERT_EQ(sample.size(), 4u);
  std::sort(sample.begin(), sample.end());
  EXPECT_TRUE(std::unique(sample.begin(), sample.end()) == sample.end());
  for (auto v : sample) EXPECT_LT(v, 10u);
  RngStream s2(5, 1);
  EXPECT_THROW(sample_without_replacement(s2, 3, 4), ValidationError);
}

TEST(OrderStats, MedianAndQuantile) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.5), 3.0);
  EXPECT_NEAR(quantile({1.0, 2.0, 3.0, 4.0}, 0.75), 3.25, 1e-12);
}
