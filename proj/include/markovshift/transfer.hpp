#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "markovshift/chain.hpp"
#include "markovshift/observable.hpp"

namespace markovshift {

using Complex = std::complex<double>;

/// Function of (x_base, ..., x_{base+width-1}) in the image chain of the
/// transfer operators; complex-valued to accommodate perturbed iterations.
struct TransferState {
  Index base = 0;
  int width = 1;
  int alphabet = 2;
  Eigen::VectorXcd values;

  static TransferState ones(Index base, int width, int alphabet);
  /// Requires a future-measurable observable (left == 0).
  static TransferState from_observable(const WindowObservable& f);
  WindowObservable real_observable() const;
  double imag_magnitude() const { return values.imag().cwiseAbs().maxCoeff(); }
};

/// L_{j,z} h = L_j(e^{z g_j} h) with g_j future-measurable at index j.
struct PerturbedOperator {
  Index index = 0;
  Complex z{0.0, 0.0};
  WindowObservable g;
};

/// Unperturbed step: (L_j h)(x_{j+1}..) = sum_y B_j[x_{j+1}][y] h(y, x_{j+1}..).
TransferState apply(const ChainContext& ctx, Index j, const TransferState& h);
WindowObservable apply(const ChainContext& ctx, Index j, const WindowObservable& h);

/// Constant extension to a wider state (extra rightmost coordinates ignored).
TransferState embed_state(const TransferState& h, int width);

TransferState apply_perturbed(const ChainContext& ctx, const PerturbedOperator& op,
                              const TransferState& h);

/// kappa_j functional: integral against the window law at the state's base.
Complex kappa(const ChainContext& ctx, const TransferState& h);
double kappa(const ChainContext& ctx, const WindowObservable& h);

/// Dense matrix of the stabilized perturbed step on width-w states.
Eigen::MatrixXcd step_matrix(const ChainContext& ctx, Index j, Complex z,
                             const WindowObservable& g, int width);

/// Stabilized state width for an observable family of width w_g.
int stabilized_width(int g_width);

struct CharFnTable {
  Eigen::VectorXd t;
  Eigen::VectorXcd value;   // exact E[exp(i t S)]
  Eigen::VectorXcd branch;  // continuous log with branch(0) = 0
};

/// Exact characteristic function of S_{j,n} g by operator products; the grid
/// must contain 0 and be fine enough for branch tracking.
CharFnTable charfn(const ChainContext& ctx, const std::vector<WindowObservable>& gs,
                   const Eigen::VectorXd& t_grid);

/// Continuous logarithm along a grid through value 1 at the index of t = 0.
Eigen::VectorXcd log_branch(const Eigen::VectorXd& t, const Eigen::VectorXcd& values);

struct DecayCurve {
  std::vector<double> norms;  // n = 1..n_max
  double gamma_fit = 0.0;
  double envelope_a = 0.0;    // smallest A with norms[n] <= A gamma^n on valid points
  double fit_residual = 0.0;  // rms residual of the tail-half log-linear fit
  int points_used = 0;
};

DecayCurve rpf_decay(const ChainContext& ctx, const WindowObservable& g, double q, double p,
                     double delta, int n_max, double noise_floor = 1e-13);

struct EigenTriple {
  Complex lambda{1.0, 0.0};
  TransferState h;            // right eigenfunction, nu_j(h) = 1
  Eigen::VectorXcd nu;        // functional weights at index j (nu(1) = 1)
  Eigen::VectorXcd nu_next;   // functional weights at index j + 1
  double eigen_residual = 0.0;
  double adjoint_residual = 0.0;
  Index buffer_used = 0;
};

using ObservableFamily = std::function<WindowObservable(Index)>;

EigenTriple eigen_triple(const ChainContext& ctx, const ObservableFamily& family, Index j,
                         Complex z, Index buffer, double tol);

struct PressureTable {
  Eigen::VectorXd grid;   // parameter values (t for z = it, or real z)
  bool imaginary_axis = true;
  Index j0 = 0;
  Eigen::MatrixXcd pi;    // (j1 - j0) x grid.size(), branch of log lambda_j

  /// Pi_{j,n} = sum_{l=j}^{j+n-1} Pi_l on the grid.
  Eigen::VectorXcd partial_sum(Index j, Index n) const;
};

/// Sequential pressure functions on a parameter grid containing 0, by one
/// forward and one backward normalized sweep per grid point.
PressureTable pressure(const ChainContext& ctx, const ObservableFamily& family, Index j0,
                       Index j1, const Eigen::VectorXd& grid, bool imaginary_axis, Index buffer);

struct DerivativeResult {
  double value = 0.0;
  double error_estimate = 0.0;
};
struct DerivativeResultC {
  Complex value{0.0, 0.0};
  double error_estimate = 0.0;
};

/// Central differences with Richardson extrapolation on a uniform grid.
DerivativeResult derivative_on_grid(const Eigen::VectorXd& t, const Eigen::VectorXd& f, int order,
                                    double at, double tol = 1e-6);
DerivativeResultC derivative_on_grid(const Eigen::VectorXd& t, const Eigen::VectorXcd& f,
                                     int order, double at, double tol = 1e-6);

}  // namespace markovshift
