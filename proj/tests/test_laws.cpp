#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "markovshift/laws.hpp"
#include "markovshift/normal.hpp"
#include "test_support.hpp"

using namespace markovshift;
using namespace markovshift::testing;

namespace {

template <class F>
void for_each_tuple(const ChainContext& ctx, Index lo, Index hi, F&& fn) {
  const TupleCodec c{ctx.alphabet(), static_cast<int>(hi - lo + 1)};
  for (Index id = 0; id < c.size(); ++id) {
    const auto t = c.decode(id);
    double p = ctx.marg.law(lo)[t[0]];
    for (Index m = lo; m < hi; ++m)
      p *= ctx.chain.kernel(m)(t[static_cast<size_t>(m - lo)], t[static_cast<size_t>(m - lo + 1)]);
    fn(t, p, id);
  }
}

double log_binomial_tail(int n, int kmin) {  // log P(Bin(n,1/2) >= kmin)
  double acc = -std::numeric_limits<double>::infinity();
  for (int k = kmin; k <= n; ++k) {
    const double lp = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                      n * std::log(2.0);
    const double m = std::max(acc, lp);
    acc = m + std::log1p(std::exp(std::min(acc, lp) - m));
  }
  return acc;
}

}  // namespace

TEST_CASE("window_law matches brute-force path enumeration") {
  auto ctx = make_context(random_doeblin_chain(3, 12, 44));
  auto law = window_law(ctx, 3, 7);
  CHECK(std::abs(law.sum() - 1.0) < 1e-12);
  for_each_tuple(ctx, 3, 7, [&](const std::vector<int>&, double p, Index id) {
    CHECK(std::abs(law[id] - p) < 1e-15);
  });
}

TEST_CASE("observable_cov matches brute force on overlapping and gapped windows") {
  auto ctx = make_context(random_doeblin_chain(2, 24, 45));
  auto f = random_window_observable(5, 1, 2, 2, 1);
  for (Index gbase : {6, 8, 14}) {
    auto g = random_window_observable(gbase, 1, 1, 2, 2);
    const Index lo = f.lo(), hi = g.hi();
    double ef = 0.0, eg = 0.0, efg = 0.0;
    const auto fe = embed(f, lo, hi);
    const auto ge = embed(g, lo, hi);
    for_each_tuple(ctx, lo, hi, [&](const std::vector<int>&, double p, Index id) {
      ef += p * fe.table[id];
      eg += p * ge.table[id];
      efg += p * fe.table[id] * ge.table[id];
    });
    CHECK(std::abs(observable_cov(f, g, ctx) - (efg - ef * eg)) < 1e-12);
  }
}

TEST_CASE("sum_moments matches brute force on a short range") {
  auto ctx = make_context(random_doeblin_chain(2, 16, 46));
  std::vector<WindowObservable> fs;
  for (Index j = 4; j < 10; ++j) fs.push_back(random_window_observable(j, 1, 1, 2, 100 + j));
  auto sm = sum_moments(fs, ctx);

  const Index lo = 3, hi = 10;
  double mean = 0.0;
  for_each_tuple(ctx, lo, hi, [&](const std::vector<int>& t, double p, Index) {
    double s = 0.0;
    for (const auto& f : fs) {
      Index id = 0;
      for (Index m = f.lo(); m <= f.hi(); ++m) id = id * 2 + t[static_cast<size_t>(m - lo)];
      s += f.table[id];
    }
    mean += p * s;
  });
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for_each_tuple(ctx, lo, hi, [&](const std::vector<int>& t, double p, Index) {
    double s = 0.0;
    for (const auto& f : fs) {
      Index id = 0;
      for (Index m = f.lo(); m <= f.hi(); ++m) id = id * 2 + t[static_cast<size_t>(m - lo)];
      s += f.table[id];
    }
    const double c = s - mean;
    m2 += p * c * c;
    m3 += p * c * c * c;
    m4 += p * c * c * c * c;
  });
  CHECK(sm.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(sm.var == doctest::Approx(m2).epsilon(1e-10));
  CHECK(sm.m3 == doctest::Approx(m3).epsilon(1e-9));
  CHECK(sm.m4 == doctest::Approx(m4).epsilon(1e-9));
}

TEST_CASE("sum_variance agrees with sum_moments across window shapes") {
  auto ctx = make_context(random_doeblin_chain(2, 64, 47));
  for (auto [l, r] : std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 0}, {0, 2}}) {
    std::vector<WindowObservable> fs;
    for (Index j = 4; j < 40; ++j) fs.push_back(random_window_observable(j, l, r, 2, 7 * j + l));
    CHECK(sum_variance(fs, ctx) == doctest::Approx(sum_moments(fs, ctx).var).epsilon(1e-9));
  }
}

TEST_CASE("iid pm coding has variance n") {
  auto ctx = make_context(iid_uniform_chain(2, 80));
  auto fs = repeat_observable(pm_coding(0, 2), 0, 64);
  CHECK(sum_variance(fs, ctx) == doctest::Approx(64.0).epsilon(1e-12));
}

TEST_CASE("lattice detection: pm coding and non-lattice rejection") {
  auto f = pm_coding(3, 2);
  auto spec = detect_lattice({f});
  REQUIRE(spec.has_value());
  CHECK(spec->step == doctest::Approx(2.0));
  CHECK(spec->span == 2);

  // two values always sit on a lattice; three incommensurable ones do not
  WindowObservable g;
  g.base = 3;
  g.left = 0;
  g.right = 1;
  g.alphabet = 2;
  g.table.resize(4);
  g.table << 0.0, 1.0, std::sqrt(2.0), 0.0;
  CHECK_FALSE(detect_lattice({g}).has_value());
}

TEST_CASE("lattice law: iid pm coding reproduces the binomial law") {
  auto ctx = make_context(iid_uniform_chain(2, 40));
  const Index n = 32;
  auto fs = repeat_observable(pm_coding(0, 2), 0, n);
  auto law = lattice_law(fs, ctx);
  CHECK(std::abs(law.mass_check() - 1.0) < 1e-10);
  CHECK(std::abs(law.mean()) < 1e-10);
  CHECK(law.variance() == doctest::Approx(static_cast<double>(n)).epsilon(1e-10));
  // S = n - 2 * (#ones); P(S = n - 2m) = C(n, m) 2^{-n}
  for (Index k = 0; k < law.size(); ++k) {
    const int m = static_cast<int>(n - k);  // atom value is -n + 2k
    const double lp = std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0) -
                      n * std::log(2.0);
    CHECK(law.log_p[k] == doctest::Approx(lp).epsilon(1e-10));
  }
}

TEST_CASE("lattice law on a Markov chain matches brute-force enumeration") {
  auto ctx = make_context(random_doeblin_chain(2, 16, 48));
  std::vector<WindowObservable> fs;
  for (Index j = 2; j < 10; ++j) {
    auto f = pm_coding(j, 2);
    f.table *= 3.0;  // lattice step 6
    fs.push_back(f);
  }
  auto law = lattice_law(fs, ctx);
  std::map<long, double> brute;
  for_each_tuple(ctx, 2, 9, [&](const std::vector<int>& t, double p, Index) {
    double s = 0.0;
    for (size_t i = 0; i < fs.size(); ++i) s += fs[i].table[t[i]];
    brute[std::lround(s)] += p;
  });
  for (Index k = 0; k < law.size(); ++k) {
    const long v = std::lround(law.atom(k));
    const double pb = brute.count(v) ? brute[v] : 0.0;
    CHECK(std::abs(std::exp(law.log_p[k]) - pb) < 1e-12);
  }
}

TEST_CASE("log-space lattice tails survive extreme underflow") {
  auto ctx = make_context(iid_uniform_chain(2, 1100));
  const Index n = 1024;
  auto fs = repeat_observable(pm_coding(0, 2), 0, n);
  auto law = lattice_law(fs, ctx);
  // P(S >= 512) = P(Bin(1024,1/2) >= 768), far below double underflow of products
  const double lt = law.log_tail(511.9, false);
  const double oracle = log_binomial_tail(1024, 768);
  CHECK(lt == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("lattice Kolmogorov distance: the spec band at n = 400") {
  auto ctx = make_context(iid_uniform_chain(2, 420));
  const Index n = 400;
  auto fs = repeat_observable(pm_coding(0, 2), 0, n);
  auto law = lattice_law(fs, ctx);
  const double sigma = std::sqrt(static_cast<double>(n));
  const double d = lattice_kolmogorov(law, 0.0, sigma);
  const double scaled = d * std::sqrt(static_cast<double>(n));
  CHECK(scaled > 0.3);
  CHECK(scaled < 0.9);
}

TEST_CASE("lattice W1 against an independent fine-grid integral") {
  auto ctx = make_context(iid_uniform_chain(2, 80));
  const Index n = 64;
  auto fs = repeat_observable(pm_coding(0, 2), 0, n);
  auto law = lattice_law(fs, ctx);
  const double sigma = std::sqrt(static_cast<double>(n));
  const double w1 = lattice_wasserstein1(law, 0.0, sigma);

  // trapezoid oracle on a fine grid
  double acc = 0.0;
  const double lo = -6.0, hi = 6.0, h = 1e-4;
  double prev = 0.0;
  for (double t = lo; t <= hi; t += h) {
    double cum = 0.0;
    for (Index k = 0; k < law.size(); ++k) {
      if ((law.atom(k)) / sigma <= t) cum += std::exp(law.log_p[k]);
    }
    const double v = std::abs(cum - normal_cdf(t));
    acc += 0.5 * (prev + v) * h;
    prev = v;
  }
  CHECK(w1 == doctest::Approx(acc).epsilon(2e-3));

  const double w1b = lattice_wasserstein(law, 0.0, sigma, 1.0);
  CHECK(w1b == doctest::Approx(w1));
  const double w2 = lattice_wasserstein(law, 0.0, sigma, 2.0);
  CHECK(w2 > 0.0);
  CHECK(w2 < 1.0);
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-10, 1e-4, 0.1, 0.5, 0.9, 1.0 - 1e-6}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
}
