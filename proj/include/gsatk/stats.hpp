#pragma once

// Numerical primitives: hypergeometric tails, the Wallenius noncentral
// hypergeometric distribution, regularized incomplete beta / Student t,
// and multiple-testing adjustments. Everything goes through log-gamma;
// factorials are never multiplied out.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "gsatk/error.hpp"

namespace gsatk {

namespace detail {

/// log(1 - exp(x)) for x <= 0, stable near both ends.
inline double log1mexp(double x) {
  if (x >= 0.0) return -std::numeric_limits<double>::infinity();
  if (x > -0.6931471805599453)  // -ln 2
    return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

}  // namespace detail

inline double ln_choose(long n, long k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  if (k == 0 || k == n) return 0.0;
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

/// Hypergeometric point mass f(h; N, G, L).
inline double hypergeom_pmf(long N, long G, long L, long h) {
  if (h < 0 || h > G || L - h < 0 || L - h > N - G) return 0.0;
  return std::exp(ln_choose(G, h) + ln_choose(N - G, L - h) -
                  ln_choose(N, L));
}

/// Upper tail P(X >= H) of the hypergeometric distribution.
inline double hypergeom_tail(long N, long G, long L, long H) {
  if (N < 0 || G < 0 || L < 0 || G > N || L > N)
    throw ValidationError("hypergeom_tail: arguments out of range");
  if (H < 0 || H > std::min(G, L))
    throw ValidationError("hypergeom_tail: H out of range");
  const long hmin = std::max(0L, L - (N - G));
  const long hmax = std::min(G, L);
  if (H <= hmin) return 1.0;
  const double lden = ln_choose(N, L);
  // Sum log-terms against the maximum for stability.
  double max_lt = -std::numeric_limits<double>::infinity();
  std::vector<double> lts;
  lts.reserve(static_cast<std::size_t>(hmax - H + 1));
  for (long j = H; j <= hmax; ++j) {
    double lt = ln_choose(G, j) + ln_choose(N - G, L - j) - lden;
    lts.push_back(lt);
    max_lt = std::max(max_lt, lt);
  }
  if (!std::isfinite(max_lt)) return 0.0;
  double s = 0.0;
  for (double lt : lts) s += std::exp(lt - max_lt);
  double p = std::exp(max_lt) * s;
  return std::min(1.0, std::max(0.0, p));
}

namespace detail {

// Continued-fraction core of the regularized incomplete beta (Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 400;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw ValidationError("inc_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Two-sided Student-t p-value with (possibly fractional) degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("student t: df must be positive");
  if (!std::isfinite(t)) return 0.0;
  const double x = df / (df + t * t);
  double p = inc_beta(0.5 * df, 0.5, x);
  return std::min(1.0, std::max(0.0, p));
}

/// Upper tail of Binomial(L, G/N) at H: the large-N approximation of the
/// hypergeometric tail.
inline double hypergeom_tail_binomial_approx(long N, long G, long L, long H) {
  if (N <= 0 || G < 0 || L < 0 || G > N || L > N)
    throw ValidationError("binomial approx: arguments out of range");
  if (H < 0 || H > std::min(G, L))
    throw ValidationError("binomial approx: H out of range");
  if (H == 0) return 1.0;
  const double q = static_cast<double>(G) / static_cast<double>(N);
  if (q >= 1.0) return 1.0;
  if (q <= 0.0) return 0.0;
  // P(X >= H) = I_q(H, L - H + 1)
  return inc_beta(static_cast<double>(H), static_cast<double>(L - H + 1), q);
}

// ---------------------------------------------------------------------------
// Wallenius noncentral hypergeometric distribution
// ---------------------------------------------------------------------------

/// Urn with m1 weighted and m2 unweighted items, n sequential draws without
/// replacement, odds ratio omega for the weighted class.
struct WalleniusParams {
  long m1 = 0;
  long m2 = 0;
  long n = 0;
  double omega = 1.0;

  void validate() const {
    if (m1 < 0 || m2 < 0)
      throw ValidationError("wallenius: class sizes must be >= 0");
    if (n < 0 || n > m1 + m2)
      throw ValidationError("wallenius: draw count out of range");
    if (!(omega > 0.0) || !std::isfinite(omega))
      throw ValidationError("wallenius: omega must be positive and finite");
  }
};

namespace detail {

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double fa, double b,
                            double fb, double m, double fm, double whole,
                            double tol, int depth, bool& converged) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::fabs(delta) <= 15.0 * tol || (b - a) < 1e-15)
    return left + right + delta / 15.0;
  if (depth <= 0) {
    converged = false;
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol,
                              depth - 1, converged) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol,
                              depth - 1, converged);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol,
                        bool& converged) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, 48,
                              converged);
}

// Point mass of the Wallenius distribution via its integral representation.
// The substitution t = u^D turns the ill-conditioned integrand into a
// unimodal bump; the quadrature nodes are seeded around the bump's mode.
inline double wallenius_pmf(const WalleniusParams& wp, long h) {
  const long m1 = wp.m1, m2 = wp.m2, n = wp.n;
  const double omega = wp.omega;
  if (h < 0 || h > m1 || n - h < 0 || n - h > m2) return 0.0;
  if (n == 0) return 1.0;
  if (n == m1 + m2) return h == m1 ? 1.0 : 0.0;

  const double D = omega * static_cast<double>(m1 - h) +
                   static_cast<double>(m2 - (n - h));
  const double logC = ln_choose(m1, h) + ln_choose(m2, n - h);
  const double hh = static_cast<double>(h);
  const double mm = static_cast<double>(n - h);

  bool converged = true;
  double value = 0.0;
  const double tol = 1e-10;

  if (D >= 1.0) {
    // integrand: exp(logC + ln D + (D-1) ln u + h ln(1-u^w) + (n-h) ln(1-u))
    auto log_f = [&](double u) -> double {
      if (u <= 0.0)
        return D > 1.0 ? -std::numeric_limits<double>::infinity() : logC;
      if (u >= 1.0) return -std::numeric_limits<double>::infinity();
      double lf = logC + std::log(D) + (D - 1.0) * std::log(u);
      if (h > 0) lf += hh * log1mexp(omega * std::log(u));
      if (n - h > 0) lf += mm * std::log1p(-u);
      return lf;
    };
    auto f = [&](double u) -> double {
      const double lf = log_f(u);
      return lf < -745.0 ? 0.0 : std::exp(lf);
    };
    // d/du of the log-integrand, used to locate the mode.
    auto dlog_f = [&](double u) -> double {
      double d = (D - 1.0) / u;
      if (h > 0)
        d -= hh * omega * std::pow(u, omega - 1.0) /
             (-std::expm1(omega * std::log(u)));
      if (n - h > 0) d -= mm / (1.0 - u);
      return d;
    };
    double lo = 1e-14, hi = 1.0 - 1e-14;
    double ustar;
    if (dlog_f(lo) <= 0.0) {
      ustar = lo;
    } else if (dlog_f(hi) >= 0.0) {
      ustar = hi;
    } else {
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (dlog_f(mid) > 0.0 ? lo : hi) = mid;
      }
      ustar = 0.5 * (lo + hi);
    }
    std::vector<double> nodes{0.0, 1.0, ustar};
    for (double d : {1e-12, 1e-9, 1e-6, 1e-3}) {
      nodes.push_back(d);
      nodes.push_back(1.0 - d);
    }
    for (double step = 1e-9; step <= 0.26; step *= 10.0) {
      nodes.push_back(ustar - step);
      nodes.push_back(ustar + step);
    }
    for (double& u : nodes) u = std::min(1.0, std::max(0.0, u));
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    const double seg_tol = tol / static_cast<double>(nodes.size());
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
      value += adaptive_simpson(f, nodes[i], nodes[i + 1], seg_tol, converged);
  } else {
    // Small D: the original variable is already well conditioned.
    auto f = [&](double t) -> double {
      if (t <= 0.0) return std::exp(logC);
      if (t >= 1.0) return 0.0;
      double lf = logC;
      const double lt = std::log(t);
      if (h > 0) lf += hh * log1mexp((omega / D) * lt);
      if (n - h > 0) lf += mm * log1mexp(lt / D);
      return lf < -745.0 ? 0.0 : std::exp(lf);
    };
    std::vector<double> nodes{0.0, 1.0};
    for (double d : {1e-12, 1e-9, 1e-6, 1e-3, 0.5}) {
      nodes.push_back(d);
      nodes.push_back(1.0 - d);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    const double seg_tol = tol / static_cast<double>(nodes.size());
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
      value += adaptive_simpson(f, nodes[i], nodes[i + 1], seg_tol, converged);
  }

  if (!converged)
    throw NumericError("wallenius quadrature did not converge");
  return std::min(1.0, std::max(0.0, value));
}

}  // namespace detail

/// Upper tail P(X >= H) of the Wallenius noncentral hypergeometric
/// distribution. The pmf is renormalized if its total mass drifts from 1 by
/// more than 1e-8.
inline double wallenius_tail(const WalleniusParams& wp, long H) {
  wp.validate();
  const long hmin = std::max(0L, wp.n - wp.m2);
  const long hmax = std::min(wp.m1, wp.n);
  if (H < 0 || H > hmax)
    throw ValidationError("wallenius_tail: H out of range");
  if (H <= hmin) return 1.0;
  std::vector<double> pmf;
  pmf.reserve(static_cast<std::size_t>(hmax - hmin + 1));
  for (long h = hmin; h <= hmax; ++h)
    pmf.push_back(detail::wallenius_pmf(wp, h));
  double total = 0.0;
  for (double v : pmf) total += v;
  if (!(total > 0.0))
    throw NumericError("wallenius_tail: probability mass vanished");
  double tail = 0.0;
  for (long h = H; h <= hmax; ++h)
    tail += pmf[static_cast<std::size_t>(h - hmin)];
  if (std::fabs(total - 1.0) > 1e-8) tail /= total;
  return std::min(1.0, std::max(0.0, tail));
}

/// Total pmf mass before renormalization; exposed for diagnostics and tests.
inline double wallenius_pmf_total(const WalleniusParams& wp) {
  wp.validate();
  const long hmin = std::max(0L, wp.n - wp.m2);
  const long hmax = std::min(wp.m1, wp.n);
  double total = 0.0;
  for (long h = hmin; h <= hmax; ++h)
    total += detail::wallenius_pmf(wp, h);
  return total;
}

// ---------------------------------------------------------------------------
// Multiple-testing adjustment
// ---------------------------------------------------------------------------

namespace detail {

inline void check_p_range(const std::vector<double>& p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("p-value outside [0,1]");
}

}  // namespace detail

/// Benjamini-Hochberg step-up adjustment, mapped back to input positions.
inline std::vector<double> adjust_bh(const std::vector<double>& p) {
  detail::check_p_range(p);
  const std::size_t m = p.size();
  if (m == 0) return {};
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] < p[b];
    return a < b;
  });
  std::vector<double> q(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double candidate =
        p[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
    running = std::min(running, std::min(1.0, candidate));
    q[order[r]] = running;
  }
  return q;
}

/// Bonferroni adjustment.
inline std::vector<double> adjust_bonferroni(const std::vector<double>& p) {
  detail::check_p_range(p);
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    q[i] = std::min(1.0, p[i] * static_cast<double>(p.size()));
  return q;
}

// ---------------------------------------------------------------------------
// Order statistics helpers
// ---------------------------------------------------------------------------

/// Median; even-length inputs average the two middle values.
inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolation quantile (R type 7) of an unsorted vector.
inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) throw ValidationError("quantile of empty vector");
  if (!(prob >= 0.0 && prob <= 1.0))
    throw ValidationError("quantile prob outside [0,1]");
  std::sort(v.begin(), v.end());
  const double idx = prob * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(idx));
  const double frac = idx - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace gsatk
