#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "markovshift/errors.hpp"
#include "markovshift/indexing.hpp"

namespace markovshift {

/// Time-indexed forward kernels Q_j (row-stochastic) plus the law of X_0.
/// The chain lives on indices 0..horizon(); kernels[j] maps index j to j+1.
struct KernelSequence {
  int alphabet = 2;
  Eigen::VectorXd initial_law;
  std::vector<Eigen::MatrixXd> kernels;

  Index horizon() const { return static_cast<Index>(kernels.size()); }
  const Eigen::MatrixXd& kernel(Index j) const { return kernels.at(static_cast<size_t>(j)); }

  /// Throws if rows or the initial law fail stochasticity within 1e-12.
  void validate() const;
};

/// Exact marginal laws pi_j for j = 0..horizon.
struct MarginalTable {
  std::vector<Eigen::VectorXd> laws;
  const Eigen::VectorXd& law(Index j) const { return laws.at(static_cast<size_t>(j)); }
};

/// Backward kernels B_j[x][y] = P(X_j = y | X_{j+1} = x).
struct BackwardKernelSequence {
  std::vector<Eigen::MatrixXd> kernels;
  std::vector<std::vector<bool>> defined;  // per index, per conditioning state
  const Eigen::MatrixXd& kernel(Index j) const { return kernels.at(static_cast<size_t>(j)); }
};

enum class MixingKind { rho, phi_reverse, psi, varpi };

enum class MixingMethod { exact, atom_lower_bound, psi_upper_bound, search_lower_bound };

struct MixingValue {
  double value = 0.0;                     // exact value or certified lower bound
  std::optional<double> upper;            // certified upper bound when not exact
  MixingMethod method = MixingMethod::exact;
  std::vector<std::string> warnings;
};

struct MixingProfile {
  MixingKind kind = MixingKind::rho;
  double exponent_q = 2.0, exponent_p = 2.0;  // only meaningful for varpi
  int past_window = 1, future_window = 1;
  std::map<Index, MixingValue> values;  // lag -> coefficient
};

struct PathEnsemble {
  std::uint64_t seed = 0;
  Index window_start = 0;
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> paths;  // replica x time
  std::vector<std::uint64_t> stream_ids;
};

/// Chain plus the derived tables everything downstream needs.
struct ChainContext {
  KernelSequence chain;
  MarginalTable marg;
  BackwardKernelSequence back;

  int alphabet() const { return chain.alphabet; }
  Index horizon() const { return chain.horizon(); }
};

MarginalTable marginals(const KernelSequence& chain);

BackwardKernelSequence backward_kernels(const KernelSequence& chain, const MarginalTable& marg);

/// Like backward_kernels, but throws ZeroMarginal instead of flagging
/// conditioning states of probability zero.
BackwardKernelSequence strict_backward_kernels(const KernelSequence& chain,
                                               const MarginalTable& marg);

ChainContext make_context(KernelSequence chain);

/// Stationary law of a single row-stochastic kernel (power iteration on Q^T).
Eigen::VectorXd stationary_law(const Eigen::MatrixXd& kernel);

PathEnsemble sample_paths(const ChainContext& ctx, Index n_replicas, Index window_start,
                          Index window_length, std::uint64_t seed, int threads = 1);

/// One-sided upper psi coefficient at lag 1: max over one-step atom pairs of
/// (Q_j[x][y]/pi_{j+1}[y] - 1)^+ over the index range.
double psi_upper_first_order(const ChainContext& ctx, Index j_lo, Index j_hi);

MixingValue mixing_coefficient(const ChainContext& ctx, MixingKind kind, Index lag,
                               int past_window, int future_window, double q = 2.0,
                               double p = 2.0, std::optional<Index> at_index = std::nullopt);

MixingProfile mixing_profile(const ChainContext& ctx, MixingKind kind, const std::vector<Index>& lags,
                             int past_window, int future_window, double q = 2.0, double p = 2.0);

struct DoeblinConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  bool holds() const { return c1 > 0.0; }
};

DoeblinConstants doeblin_constants(const KernelSequence& chain, const MarginalTable& reference);

/// Declarative chain generator.
struct EnvironmentSpec {
  std::string kind = "cyclic";  // cyclic | rotation | markov
  std::vector<int> orbit;       // cyclic pattern of environment states
  int phase = 0;
  double alpha = 0.0, theta0 = 0.0;  // rotation parameters
  int bins = 1;
  Eigen::MatrixXd env_kernel;  // markov environment
  int start_state = 0;
  std::uint64_t seed = 0;
};

std::vector<int> environment_orbit(const EnvironmentSpec& spec, Index length);

struct ChainSpec {
  std::string kind = "homogeneous";  // homogeneous | perturbed | parry | environment
  int alphabet = 2;
  Index horizon = 128;
  Eigen::MatrixXd kernel;                   // homogeneous / perturbed base Q
  std::vector<Eigen::MatrixXd> env_kernels; // environment: Q^(omega)
  Eigen::MatrixXd adjacency;                // parry: 0-1 matrix
  std::optional<Eigen::VectorXd> initial;   // default: stationary of the first kernel
  double epsilon = 0.0;                     // perturbed
  std::uint64_t seed = 0;                   // perturbed noise
  EnvironmentSpec environment;
};

KernelSequence make_chain(const ChainSpec& spec);

}  // namespace markovshift
