#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "markovshift/chain.hpp"
#include "test_support.hpp"

using namespace markovshift;
using namespace markovshift::testing;

TEST_CASE("marginals: iid uniform is a fixed point") {
  auto ctx = make_context(iid_uniform_chain(2, 16));
  for (Index j = 0; j <= 16; ++j) {
    CHECK(ctx.marg.law(j)[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ctx.marg.law(j).sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("marginals: stationary start stays stationary") {
  auto ctx = make_context(two_state_mixing_chain(32));
  for (Index j = 0; j <= 32; ++j) {
    CHECK(std::abs(ctx.marg.law(j)[0] - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(ctx.marg.law(j)[1] - 1.0 / 3.0) < 1e-12);
  }
}

TEST_CASE("marginals: point mass under a permutation kernel alternates") {
  KernelSequence c;
  c.alphabet = 2;
  c.initial_law = Eigen::VectorXd(2);
  c.initial_law << 1.0, 0.0;
  Eigen::MatrixXd q(2, 2);
  q << 0.0, 1.0, 1.0, 0.0;
  c.kernels.assign(4, q);
  auto marg = marginals(c);
  CHECK(marg.law(1)[1] == 1.0);
  CHECK(marg.law(2)[0] == 1.0);
  CHECK(marg.law(3)[1] == 1.0);
}

TEST_CASE("chapman-kolmogorov composition is exact") {
  auto chain = random_doeblin_chain(3, 24, 7);
  auto marg = marginals(chain);
  // composing j -> k -> l reproduces the marginal at l
  for (Index j : {0, 5, 11}) {
    for (Index l : {18, 23}) {
      Eigen::VectorXd pi = marg.law(j);
      for (Index m = j; m < l; ++m) pi = chain.kernel(m).transpose() * pi;
      CHECK((pi - marg.law(l)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("backward kernels: iid chain forgets the future") {
  auto ctx = make_context(iid_uniform_chain(2, 8));
  for (Index j = 0; j < 8; ++j)
    for (int x = 0; x < 2; ++x) {
      CHECK(ctx.back.kernel(j)(x, 0) == doctest::Approx(0.5).epsilon(1e-14));
      CHECK(ctx.back.kernel(j)(x, 1) == doctest::Approx(0.5).epsilon(1e-14));
    }
}

TEST_CASE("backward kernels: hand-checked Bayes ratio") {
  auto ctx = make_context(two_state_mixing_chain(8));
  // B[0][0] = pi(0) q(0,0) / pi(0) = 0.9
  CHECK(std::abs(ctx.back.kernel(3)(0, 0) - 0.9) < 1e-12);
  CHECK(std::abs(ctx.back.kernel(3)(1, 0) - (2.0 / 3.0 * 0.1) / (1.0 / 3.0)) < 1e-12);
}

TEST_CASE("backward kernels: Bayes identity and forward reconstruction") {
  auto chain = random_doeblin_chain(4, 12, 99);
  auto marg = marginals(chain);
  auto back = backward_kernels(chain, marg);
  for (Index j = 0; j < 12; ++j)
    for (int x = 0; x < 4; ++x)
      for (int y = 0; y < 4; ++y) {
        CHECK(std::abs(marg.law(j)[y] * chain.kernel(j)(y, x) -
                       marg.law(j + 1)[x] * back.kernel(j)(x, y)) < 1e-12);
        // reconstruct the forward kernel from the backward one
        const double q = marg.law(j + 1)[x] * back.kernel(j)(x, y) / marg.law(j)[y];
        CHECK(std::abs(q - chain.kernel(j)(y, x)) < 1e-12);
      }
}

TEST_CASE("strict backward kernels reject vanishing marginals") {
  KernelSequence c;
  c.alphabet = 2;
  c.initial_law = Eigen::VectorXd(2);
  c.initial_law << 1.0, 0.0;
  Eigen::MatrixXd q(2, 2);
  q << 0.0, 1.0, 1.0, 0.0;
  c.kernels.assign(2, q);
  auto marg = marginals(c);
  CHECK_THROWS_AS(strict_backward_kernels(c, marg), ZeroMarginal);
}

TEST_CASE("sample_paths: deterministic kernel gives identical orbits") {
  KernelSequence c;
  c.alphabet = 2;
  c.initial_law = Eigen::VectorXd(2);
  c.initial_law << 1.0, 0.0;
  Eigen::MatrixXd q(2, 2);
  q << 0.0, 1.0, 1.0, 0.0;
  c.kernels.assign(6, q);
  auto ctx = make_context(c);
  auto ens = sample_paths(ctx, 16, 0, 7, 42);
  for (Index r = 0; r < 16; ++r)
    for (Index m = 0; m < 7; ++m) CHECK(ens.paths(r, m) == (m % 2 == 0 ? 0 : 1));
}

TEST_CASE("sample_paths: binomial frequency band and determinism") {
  auto ctx = make_context(iid_uniform_chain(2, 4));
  const Index reps = 100000;
  auto ens = sample_paths(ctx, reps, 0, 3, 7);
  double count = 0.0;
  for (Index r = 0; r < reps; ++r) count += (ens.paths(r, 1) == 0);
  CHECK(std::abs(count / reps - 0.5) < 3.0 / std::sqrt(static_cast<double>(reps)));

  auto ens2 = sample_paths(ctx, reps, 0, 3, 7, /*threads=*/4);
  CHECK(ens.paths == ens2.paths);
  auto ens3 = sample_paths(ctx, reps, 0, 3, 8);
  CHECK(ens.paths != ens3.paths);
}

TEST_CASE("mixing: iid chain has zero coefficients") {
  auto ctx = make_context(iid_uniform_chain(2, 12));
  for (auto kind : {MixingKind::rho, MixingKind::psi, MixingKind::phi_reverse}) {
    auto mv = mixing_coefficient(ctx, kind, 2, 2, 2);
    CHECK(mv.value < 1e-12);
  }
}

TEST_CASE("mixing: rho decays like the second eigenvalue") {
  auto ctx = make_context(two_state_mixing_chain(24));
  for (Index n : {1, 2, 3, 5}) {
    auto mv = mixing_coefficient(ctx, MixingKind::rho, n, 1, 1);
    CHECK(mv.method == MixingMethod::exact);
    CHECK(std::abs(mv.value - std::pow(0.7, static_cast<double>(n))) < 1e-10);
  }
}

TEST_CASE("mixing: psi(1) of the two-state chain is 1.4") {
  auto ctx = make_context(two_state_mixing_chain(16));
  auto mv = mixing_coefficient(ctx, MixingKind::psi, 1, 1, 1);
  CHECK(std::abs(mv.value - 1.4) < 1e-12);
}

TEST_CASE("mixing: exact values are nonincreasing in the lag") {
  auto ctx = make_context(random_doeblin_chain(3, 30, 5));
  for (auto kind : {MixingKind::rho, MixingKind::psi}) {
    auto prof = mixing_profile(ctx, kind, {1, 2, 3, 4, 5, 6}, 2, 2);
    double prev = std::numeric_limits<double>::infinity();
    for (auto& [lag, mv] : prof.values) {
      CHECK(mv.value <= prev + 1e-10);
      prev = mv.value;
    }
  }
}

TEST_CASE("mixing: rho <= 2 sqrt(phi) with exact phi on small blocks") {
  auto ctx = make_context(random_doeblin_chain(3, 20, 21));
  for (Index n : {1, 2, 4}) {
    auto rho = mixing_coefficient(ctx, MixingKind::rho, n, 2, 2);
    auto phi = mixing_coefficient(ctx, MixingKind::phi_reverse, n, 2, 2);
    CHECK(phi.method == MixingMethod::exact);
    CHECK(rho.value <= 2.0 * std::sqrt(phi.value) + 1e-10);
  }
}

TEST_CASE("mixing: psi dominates the general coefficient") {
  auto ctx = make_context(random_doeblin_chain(2, 16, 31));
  auto psi = mixing_coefficient(ctx, MixingKind::psi, 2, 2, 2);
  auto w = mixing_coefficient(ctx, MixingKind::varpi, 2, 2, 2, 3.0, 1.5);
  CHECK(w.method == MixingMethod::search_lower_bound);
  CHECK(w.value <= *w.upper + 1e-12);
  CHECK(*w.upper == doctest::Approx(psi.value));
}

TEST_CASE("doeblin constants") {
  auto iid = make_context(iid_uniform_chain(3, 8));
  auto d0 = doeblin_constants(iid.chain, iid.marg);
  CHECK(d0.c1 == doctest::Approx(1.0));
  CHECK(d0.c2 == doctest::Approx(1.0));

  auto ctx = make_context(two_state_mixing_chain(8));
  auto d1 = doeblin_constants(ctx.chain, ctx.marg);
  CHECK(d1.c1 == doctest::Approx(0.3));
  CHECK(d1.c2 == doctest::Approx(2.4));
  CHECK(d1.holds());

  KernelSequence c;
  c.alphabet = 2;
  c.initial_law = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::MatrixXd q(2, 2);
  q << 0.0, 1.0, 0.5, 0.5;
  c.kernels.assign(4, q);
  auto ctx2 = make_context(c);
  auto d2 = doeblin_constants(ctx2.chain, ctx2.marg);
  CHECK(d2.c1 == 0.0);
  CHECK_FALSE(d2.holds());
}

TEST_CASE("make_chain: parry on the full 2-shift is uniform") {
  ChainSpec spec;
  spec.kind = "parry";
  spec.alphabet = 2;
  spec.horizon = 6;
  spec.adjacency = Eigen::MatrixXd::Ones(2, 2);
  auto chain = make_chain(spec);
  for (Index j = 0; j < 6; ++j)
    CHECK((chain.kernel(j) - Eigen::MatrixXd::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("make_chain: parry on the golden-mean shift") {
  ChainSpec spec;
  spec.kind = "parry";
  spec.alphabet = 2;
  spec.horizon = 4;
  spec.adjacency.resize(2, 2);
  spec.adjacency << 1, 1, 1, 0;
  auto chain = make_chain(spec);
  // top eigenpair of [[1,1],[1,0]]: lambda = (1+sqrt5)/2, u = (lambda, 1), so
  // Q[0] = (1/lambda, 1/lambda^2) and the symbol "1" has frequency 1/(1+lambda^2)
  CHECK(std::abs(chain.kernel(0)(0, 0) - 0.6180339887498949) < 1e-10);
  CHECK(std::abs(chain.kernel(0)(0, 1) - 0.3819660112501051) < 1e-10);
  CHECK(chain.kernel(0)(1, 0) == doctest::Approx(1.0));
  auto marg = marginals(chain);
  CHECK(std::abs(marg.law(2)[1] - 0.2763932022500210) < 1e-10);
}

TEST_CASE("make_chain: non-primitive adjacency is rejected") {
  ChainSpec spec;
  spec.kind = "parry";
  spec.alphabet = 2;
  spec.horizon = 4;
  spec.adjacency = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(make_chain(spec), NotPrimitive);
}

TEST_CASE("make_chain: zero perturbation is the homogeneous chain") {
  Eigen::MatrixXd q(2, 2);
  q << 0.9, 0.1, 0.2, 0.8;
  ChainSpec spec;
  spec.kind = "perturbed";
  spec.alphabet = 2;
  spec.horizon = 8;
  spec.kernel = q;
  spec.epsilon = 0.0;
  spec.seed = 11;
  auto chain = make_chain(spec);
  for (Index j = 0; j < 8; ++j) CHECK((chain.kernel(j) - q).cwiseAbs().maxCoeff() == 0.0);

  spec.epsilon = 0.05;
  auto chain2 = make_chain(spec);
  chain2.validate();
  CHECK((chain2.kernel(0) - q).cwiseAbs().maxCoeff() > 0.0);
  CHECK((chain2.kernel(0) - chain2.kernel(1)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("make_chain: environment orbit drives the kernels") {
  Eigen::MatrixXd q0(2, 2), q1(2, 2);
  q0 << 0.9, 0.1, 0.2, 0.8;
  q1 << 0.5, 0.5, 0.5, 0.5;
  ChainSpec spec;
  spec.kind = "environment";
  spec.alphabet = 2;
  spec.horizon = 6;
  spec.env_kernels = {q0, q1};
  spec.environment.kind = "cyclic";
  spec.environment.orbit = {0, 1};
  auto chain = make_chain(spec);
  CHECK((chain.kernel(0) - q0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((chain.kernel(1) - q1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((chain.kernel(2) - q0).cwiseAbs().maxCoeff() == 0.0);

  spec.environment.phase = 1;
  auto chain2 = make_chain(spec);
  CHECK((chain2.kernel(0) - q1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("environment orbits: rotation coding is deterministic") {
  EnvironmentSpec env;
  env.kind = "rotation";
  env.alpha = 0.61803398875;
  env.bins = 2;
  auto o1 = environment_orbit(env, 32);
  auto o2 = environment_orbit(env, 32);
  CHECK(o1 == o2);
  bool has0 = false, has1 = false;
  for (int w : o1) (w == 0 ? has0 : has1) = true;
  CHECK(has0);
  CHECK(has1);
}
