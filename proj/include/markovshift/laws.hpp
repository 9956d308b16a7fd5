#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "markovshift/chain.hpp"
#include "markovshift/observable.hpp"

namespace markovshift {

/// Joint law of (X_lo, ..., X_hi) as a dense vector in lexicographic order.
Eigen::VectorXd window_law(const ChainContext& ctx, Index lo, Index hi);

/// One-coordinate extension on the right through kernel Q_m (m = current hi).
Eigen::VectorXd extend_window_law(const Eigen::VectorXd& law, int alphabet,
                                  const Eigen::MatrixXd& kernel);

double observable_mean(const WindowObservable& f, const ChainContext& ctx);

/// L^p norm under the window law; p may be infinity. ess-sup excludes
/// zero-probability tuples, the full-table variant does not.
double observable_lp(const WindowObservable& f, const ChainContext& ctx, double p,
                     SupConvention conv = SupConvention::support_restricted);

double observable_moment(const WindowObservable& f, const ChainContext& ctx, int k);

/// Exact covariance Cov(f, g); windows may overlap or be separated by a gap
/// (the gap is bridged by forward propagation, never by a joint table).
double observable_cov(const WindowObservable& f, const WindowObservable& g,
                      const ChainContext& ctx);

/// Exact central moments of S = sum_j f_j up to order 4, by forward dynamic
/// programming over (window configuration, power). All f_j must share (left,
/// right) and be consecutive from fs[0].base.
struct SumMoments {
  double mean = 0.0;
  double var = 0.0;
  double m3 = 0.0;  // central
  double m4 = 0.0;  // central
};

SumMoments sum_moments(const std::vector<WindowObservable>& fs, const ChainContext& ctx);

/// Exact variance of S_{j0, j0+n} with an O(n) forward sweep.
double sum_variance(const std::vector<WindowObservable>& fs, const ChainContext& ctx);

/// Lattice structure a_j + b Z shared by a family of observables.
struct LatticeSpec {
  double step = 0.0;
  std::vector<double> offsets;          // per-observable minimum value
  std::vector<std::vector<Index>> residues;  // per-observable integer table
  Index span = 0;
  double origin = 0.0;  // sum of offsets
};

std::optional<LatticeSpec> detect_lattice(const std::vector<WindowObservable>& fs,
                                          double tol = 1e-9);

/// Exact law of S = sum f_j on the lattice origin + step * k, k = 0..span-1.
/// In log-space mode probabilities are carried as logs end to end, so
/// tails of order exp(-1000) survive.
struct LatticeLaw {
  double origin = 0.0;
  double step = 1.0;
  Eigen::VectorXd log_p;  // log probabilities (-inf for empty slots)

  double atom(Index k) const { return origin + step * static_cast<double>(k); }
  Index size() const { return log_p.size(); }
  double mass_check() const;  // sum of probabilities
  double mean() const;
  double variance() const;
  /// log P(S >= x) (strict = false) or log P(S > x).
  double log_tail(double x, bool strict) const;
};

LatticeLaw lattice_law(const std::vector<WindowObservable>& fs, const ChainContext& ctx,
                       Index span_limit = 10'000'000);

/// Exact Kolmogorov distance between the centered-scaled lattice law and the
/// standard normal; mean/sigma are the exact centering and scaling.
double lattice_kolmogorov(const LatticeLaw& law, double mean, double sigma);

/// Exact W_1 distance between the centered-scaled lattice law and the normal.
double lattice_wasserstein1(const LatticeLaw& law, double mean, double sigma);

/// W_b via the quantile representation (numerical in u, exact atoms).
double lattice_wasserstein(const LatticeLaw& law, double mean, double sigma, double b);

/// sup over |t| <= t_max of (1 + |t|^s) |F_n(t) - Phi(t)| on the lattice atoms.
double lattice_weighted_kolmogorov(const LatticeLaw& law, double mean, double sigma, double s,
                                   double t_max);

}  // namespace markovshift
