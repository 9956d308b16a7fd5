#include "markovshift/transfer.hpp"

#include <algorithm>
#include <cmath>

#include "markovshift/laws.hpp"

namespace markovshift {

TransferState TransferState::ones(Index base, int width, int alphabet) {
  TransferState s;
  s.base = base;
  s.width = width;
  s.alphabet = alphabet;
  s.values = Eigen::VectorXcd::Ones(checked_table_size(alphabet, width));
  return s;
}

TransferState TransferState::from_observable(const WindowObservable& f) {
  if (f.left != 0) throw Error("transfer states require future-measurable observables");
  TransferState s;
  s.base = f.base;
  s.width = f.width();
  s.alphabet = f.alphabet;
  s.values = f.table.cast<Complex>();
  return s;
}

WindowObservable TransferState::real_observable() const {
  WindowObservable f;
  f.base = base;
  f.left = 0;
  f.right = width - 1;
  f.alphabet = alphabet;
  f.table = values.real();
  return f;
}

namespace {

template <class Vec>
Vec apply_impl(const ChainContext& ctx, Index j, const Vec& in, int width, int alphabet) {
  const int out_width = std::max(width - 1, 1);
  const Index out_size = checked_table_size(alphabet, out_width);
  Vec out(out_size);
  const Eigen::MatrixXd& b = ctx.back.kernel(j);
  if (width >= 2) {
    const Index inner = checked_table_size(alphabet, width - 1);
    for (Index t = 0; t < inner; ++t) {
      const int anchor = static_cast<int>(t / (inner / alphabet));  // x_{j+1}
      if (!ctx.back.defined[static_cast<size_t>(j)][static_cast<size_t>(anchor)])
        throw ZeroMarginal(j + 1, anchor);
      typename Vec::Scalar acc{};
      for (int y = 0; y < alphabet; ++y) acc += b(anchor, y) * in[y * inner + t];
      out[t] = acc;
    }
  } else {
    for (int x = 0; x < alphabet; ++x) {
      if (!ctx.back.defined[static_cast<size_t>(j)][static_cast<size_t>(x)])
        throw ZeroMarginal(j + 1, x);
      typename Vec::Scalar acc{};
      for (int y = 0; y < alphabet; ++y) acc += b(x, y) * in[y];
      out[x] = acc;
    }
  }
  return out;
}

}  // namespace

TransferState apply(const ChainContext& ctx, Index j, const TransferState& h) {
  if (h.base != j) throw Error("state base does not match the operator index");
  TransferState out;
  out.base = j + 1;
  out.width = std::max(h.width - 1, 1);
  out.alphabet = h.alphabet;
  out.values = apply_impl(ctx, j, h.values, h.width, h.alphabet);
  return out;
}

WindowObservable apply(const ChainContext& ctx, Index j, const WindowObservable& h) {
  if (h.left != 0 || h.base != j) throw Error("transfer apply needs a future window at index j");
  WindowObservable out;
  out.base = j + 1;
  out.left = 0;
  out.right = std::max(h.right - 1, 0);
  out.alphabet = h.alphabet;
  out.table = apply_impl(ctx, j, h.table, h.width(), h.alphabet);
  return out;
}

TransferState embed_state(const TransferState& h, int width) {
  if (width < h.width) throw Error("embed_state cannot shrink a state");
  if (width == h.width) return h;
  TransferState out;
  out.base = h.base;
  out.width = width;
  out.alphabet = h.alphabet;
  const Index extra = checked_table_size(h.alphabet, width - h.width);
  out.values.resize(h.values.size() * extra);
  for (Index i = 0; i < h.values.size(); ++i)
    out.values.segment(i * extra, extra).setConstant(h.values[i]);
  return out;
}

TransferState apply_perturbed(const ChainContext& ctx, const PerturbedOperator& op,
                              const TransferState& h) {
  if (op.g.left != 0 || op.g.base != op.index)
    throw Error("perturbed operator needs a future-measurable observable at its index");
  if (h.base != op.index) throw Error("state base does not match the operator index");
  const int w = std::max(h.width, op.g.width());
  TransferState work = embed_state(h, w);
  const Index stride = checked_table_size(h.alphabet, w - op.g.width());
  if (op.z != Complex{0.0, 0.0}) {
    for (Index i = 0; i < work.values.size(); ++i)
      work.values[i] *= std::exp(op.z * op.g.table[i / stride]);
  }
  return apply(ctx, op.index, work);
}

Complex kappa(const ChainContext& ctx, const TransferState& h) {
  const Eigen::VectorXd law = window_law(ctx, h.base, h.base + h.width - 1);
  return (law.cast<Complex>().cwiseProduct(h.values)).sum();
}

double kappa(const ChainContext& ctx, const WindowObservable& h) {
  return window_law(ctx, h.lo(), h.hi()).dot(h.table);
}

int stabilized_width(int g_width) { return std::max(g_width - 1, 1); }

Eigen::MatrixXcd step_matrix(const ChainContext& ctx, Index j, Complex z,
                             const WindowObservable& g, int width) {
  const Index n = checked_table_size(ctx.alphabet(), width);
  Eigen::MatrixXcd m(n, n);
  TransferState e;
  e.base = j;
  e.width = width;
  e.alphabet = ctx.alphabet();
  PerturbedOperator op{j, z, g};
  for (Index c = 0; c < n; ++c) {
    e.values = Eigen::VectorXcd::Zero(n);
    e.values[c] = 1.0;
    TransferState out = apply_perturbed(ctx, op, e);
    if (out.values.size() != n) throw Error("stabilized width mismatch in step_matrix");
    m.col(c) = out.values;
  }
  return m;
}

Eigen::VectorXcd log_branch(const Eigen::VectorXd& t, const Eigen::VectorXcd& values) {
  Index i0 = -1;
  for (Index i = 0; i < t.size(); ++i)
    if (t[i] == 0.0) i0 = i;
  if (i0 < 0) throw Error("branch grid must contain t = 0");
  Eigen::VectorXcd out(t.size());
  out[i0] = std::log(values[i0]);
  auto step = [&](Index from, Index to) {
    const Complex ratio = values[to] / values[from];
    if (!(std::abs(ratio) > 0.0) || !std::isfinite(std::abs(ratio))) throw BranchJump(t[to]);
    const Complex dl = std::log(ratio);
    if (std::abs(dl.imag()) >= std::acos(-1.0) * 0.999) throw BranchJump(t[to]);
    out[to] = out[from] + dl;
  };
  for (Index i = i0 + 1; i < t.size(); ++i) step(i - 1, i);
  for (Index i = i0 - 1; i >= 0; --i) step(i + 1, i);
  return out;
}

CharFnTable charfn(const ChainContext& ctx, const std::vector<WindowObservable>& gs,
                   const Eigen::VectorXd& t_grid) {
  if (gs.empty()) {
    CharFnTable table;
    table.t = t_grid;
    table.value = Eigen::VectorXcd::Ones(t_grid.size());
    table.branch = Eigen::VectorXcd::Zero(t_grid.size());
    return table;
  }
  const Index j0 = gs[0].base;
  const int wg = gs[0].width();
  for (size_t i = 0; i < gs.size(); ++i) {
    if (gs[i].left != 0 || gs[i].base != j0 + static_cast<Index>(i) || gs[i].width() != wg)
      throw Error("charfn needs consecutive future-measurable observables of a common width");
  }
  CharFnTable table;
  table.t = t_grid;
  table.value.resize(t_grid.size());
  const int w = stabilized_width(wg);
  for (Index it = 0; it < t_grid.size(); ++it) {
    TransferState s = TransferState::ones(j0, w, ctx.alphabet());
    const Complex z{0.0, t_grid[it]};
    for (size_t m = 0; m < gs.size(); ++m)
      s = apply_perturbed(ctx, {j0 + static_cast<Index>(m), z, gs[m]}, s);
    table.value[it] = kappa(ctx, s);
  }
  table.branch = log_branch(t_grid, table.value);
  return table;
}

DecayCurve rpf_decay(const ChainContext& ctx, const WindowObservable& g, double q, double p,
                     double delta, int n_max, double noise_floor) {
  (void)q;
  DecayCurve curve;
  const double mean = kappa(ctx, g);
  WindowObservable s = g;
  for (int n = 1; n <= n_max; ++n) {
    if (s.base + 1 > ctx.horizon()) break;
    s = apply(ctx, s.base, s);
    WindowObservable centered = s;
    centered.table.array() -= mean;
    const NormReport rep = norm(centered, ctx, p, p, delta);
    curve.norms.push_back(rep.total);
  }
  // log-linear fit over the tail half of the points above the noise floor
  int valid = 0;
  while (valid < static_cast<int>(curve.norms.size()) &&
         curve.norms[static_cast<size_t>(valid)] > noise_floor)
    ++valid;
  curve.points_used = valid;
  if (valid >= 2) {
    const int lo = valid / 2;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int n = lo; n < valid; ++n, ++cnt) {
      const double x = n + 1.0, y = std::log(curve.norms[static_cast<size_t>(n)]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    curve.gamma_fit = std::exp(slope);
    const double intercept = (sy - slope * sx) / cnt;
    double ss = 0.0;
    for (int n = lo; n < valid; ++n) {
      const double y = std::log(curve.norms[static_cast<size_t>(n)]);
      const double r = y - (slope * (n + 1.0) + intercept);
      ss += r * r;
    }
    curve.fit_residual = std::sqrt(ss / cnt);
    double a = 0.0;
    for (int n = 0; n < valid; ++n)
      a = std::max(a, curve.norms[static_cast<size_t>(n)] /
                          std::pow(curve.gamma_fit, n + 1.0));
    curve.envelope_a = a;
  } else if (valid == 1) {
    curve.gamma_fit = 0.0;
    curve.envelope_a = curve.norms[0];
  }
  return curve;
}

EigenTriple eigen_triple(const ChainContext& ctx, const ObservableFamily& family, Index j,
                         Complex z, Index buffer, double tol) {
  const WindowObservable gj = family(j);
  const int w = stabilized_width(gj.width());
  const Index n = checked_table_size(ctx.alphabet(), w);
  const Index lo = std::max<Index>(0, j - buffer);
  const Index hi = std::min<Index>(ctx.horizon() - w, j + buffer);
  if (hi <= j) throw NoConvergence("no room for the adjoint iteration");

  // forward normalized iteration from the constant function at lo
  Eigen::VectorXcd fwd = Eigen::VectorXcd::Ones(n);
  Eigen::VectorXcd h_j, h_next;
  for (Index k = lo; k <= j; ++k) {
    if (k == j) h_j = fwd;
    const Eigen::MatrixXcd m = step_matrix(ctx, k, z, family(k), w);
    fwd = m * fwd;
    Index imax;
    fwd.cwiseAbs().maxCoeff(&imax);
    if (std::abs(fwd[imax]) == 0.0) throw NoConvergence("forward iterate vanished");
    fwd /= fwd[imax];
  }
  h_next = fwd;

  // backward adjoint iteration from the window-law functional at hi
  Eigen::VectorXcd nu = window_law(ctx, hi, hi + w - 1).cast<Complex>();
  Eigen::VectorXcd nu_j, nu_next;
  for (Index k = hi - 1; k >= j; --k) {
    if (k + 1 == j + 1) nu_next = nu;
    const Eigen::MatrixXcd m = step_matrix(ctx, k, z, family(k), w);
    nu = m.transpose() * nu;
    const Complex mass = nu.sum();  // nu(1)
    if (std::abs(mass) == 0.0) throw NoConvergence("adjoint iterate lost normalization");
    nu /= mass;
    if (k == j) nu_j = nu;
  }
  if (nu_next.size() == 0) nu_next = window_law(ctx, j + 1, j + w).cast<Complex>();

  const Eigen::MatrixXcd mj = step_matrix(ctx, j, z, gj, w);
  auto pair = [](const Eigen::VectorXcd& fnl, const Eigen::VectorXcd& vec) -> Complex {
    return fnl.cwiseProduct(vec).sum();  // plain bilinear pairing
  };
  const Complex scale_h = pair(nu_j, h_j);
  if (std::abs(scale_h) < 1e-300) throw NoConvergence("nu(h) vanished");
  Eigen::VectorXcd h = h_j / scale_h;  // nu_j(h) = 1
  const Complex lambda = pair(nu_next, mj * h);

  // independent forward copy at j+1 for the eigen-equation residual
  const Complex scale_hn = pair(nu_next, h_next);
  if (std::abs(scale_hn) < 1e-300) throw NoConvergence("nu(h) vanished at j+1");
  const Eigen::VectorXcd h1 = h_next / scale_hn;

  EigenTriple out;
  out.lambda = lambda;
  out.h.base = j;
  out.h.width = w;
  out.h.alphabet = ctx.alphabet();
  out.h.values = h;
  out.nu = nu_j;
  out.nu_next = nu_next;
  out.buffer_used = std::min(j - lo, hi - j);
  out.eigen_residual =
      (mj * h - lambda * h1).cwiseAbs().maxCoeff() / std::max(1.0, h.cwiseAbs().maxCoeff());
  // adjoint residual: |nu_{j+1}(L F) - lambda nu_j(F)| on basis vectors
  double adj = 0.0;
  const Eigen::VectorXcd lhs = mj.transpose() * nu_next;
  for (Index c = 0; c < n; ++c) adj = std::max(adj, std::abs(lhs[c] - lambda * nu_j[c]));
  out.adjoint_residual = adj;
  if (out.eigen_residual > tol || out.adjoint_residual > tol)
    throw NoConvergence("eigen triple residual " + std::to_string(out.eigen_residual) + "/" +
                        std::to_string(out.adjoint_residual) + " above tolerance at buffer " +
                        std::to_string(out.buffer_used));
  return out;
}

Eigen::VectorXcd PressureTable::partial_sum(Index j, Index n) const {
  Eigen::VectorXcd s = Eigen::VectorXcd::Zero(grid.size());
  for (Index l = j; l < j + n; ++l) s += pi.row(l - j0).transpose();
  return s;
}

PressureTable pressure(const ChainContext& ctx, const ObservableFamily& family, Index j0,
                       Index j1, const Eigen::VectorXd& grid, bool imaginary_axis, Index buffer) {
  Index zero_idx = -1;
  for (Index i = 0; i < grid.size(); ++i)
    if (grid[i] == 0.0) zero_idx = i;
  if (zero_idx < 0) throw Error("pressure grid must contain 0");

  const int w = stabilized_width(family(j0).width());
  const Index n = checked_table_size(ctx.alphabet(), w);
  const Index lo = std::max<Index>(0, j0 - buffer);
  const Index hi = std::min<Index>(ctx.horizon() - w, j1 + buffer);
  if (hi <= j1) throw HorizonExceeded("pressure needs buffer room past the index range");

  PressureTable table;
  table.grid = grid;
  table.imaginary_axis = imaginary_axis;
  table.j0 = j0;
  Eigen::MatrixXcd lambda(j1 - j0, grid.size());

  std::vector<WindowObservable> gcache;
  gcache.reserve(static_cast<size_t>(hi - lo));
  for (Index k = lo; k < hi; ++k) gcache.push_back(family(k));

  for (Index gi = 0; gi < grid.size(); ++gi) {
    const Complex z = imaginary_axis ? Complex{0.0, grid[gi]} : Complex{grid[gi], 0.0};
    // forward sweep
    std::vector<Eigen::VectorXcd> hvec(static_cast<size_t>(j1 - j0 + 1));
    Eigen::VectorXcd fwd = Eigen::VectorXcd::Ones(n);
    for (Index k = lo; k <= j1; ++k) {
      if (k >= j0) hvec[static_cast<size_t>(k - j0)] = fwd;
      if (k == j1) break;
      fwd = step_matrix(ctx, k, z, gcache[static_cast<size_t>(k - lo)], w) * fwd;
      Index imax;
      fwd.cwiseAbs().maxCoeff(&imax);
      if (std::abs(fwd[imax]) == 0.0) throw NoConvergence("forward sweep vanished");
      fwd /= fwd[imax];
    }
    // backward sweep
    std::vector<Eigen::VectorXcd> nvec(static_cast<size_t>(j1 - j0 + 1));
    Eigen::VectorXcd nu = window_law(ctx, hi, hi + w - 1).cast<Complex>();
    for (Index k = hi - 1; k >= j0; --k) {
      nu = step_matrix(ctx, k, z, gcache[static_cast<size_t>(k - lo)], w).transpose() * nu;
      const Complex mass = nu.sum();
      if (std::abs(mass) == 0.0) throw NoConvergence("backward sweep lost normalization");
      nu /= mass;
      if (k <= j1) {
        if (k >= j0) nvec[static_cast<size_t>(k - j0)] = nu;
      }
    }
    // lambda_j = nu_{j+1}(L_j h_j) / nu_j(h_j); nvec[k-j0] holds nu_k
    for (Index jj = j0; jj < j1; ++jj) {
      const Eigen::MatrixXcd m = step_matrix(ctx, jj, z, gcache[static_cast<size_t>(jj - lo)], w);
      const Eigen::VectorXcd& hj = hvec[static_cast<size_t>(jj - j0)];
      const Eigen::VectorXcd& nu_next = nvec[static_cast<size_t>(jj + 1 - j0)];
      const Complex num = nu_next.cwiseProduct(m * hj).sum();
      const Complex den = nvec[static_cast<size_t>(jj - j0)].cwiseProduct(hj).sum();
      if (std::abs(den) < 1e-300) throw NoConvergence("pressure gauge vanished");
      lambda(jj - j0, gi) = num / den;
    }
  }

  // branch of log lambda_j along the grid, anchored at lambda_j(0) = 1
  table.pi.resize(j1 - j0, grid.size());
  for (Index jj = 0; jj < j1 - j0; ++jj)
    table.pi.row(jj) = log_branch(grid, lambda.row(jj).transpose()).transpose();
  return table;
}

namespace {

template <class Scalar>
Scalar stencil(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f, Index i0, Index m, int order,
               double h) {
  auto at = [&](Index k) { return f[i0 + k * m]; };
  switch (order) {
    case 1: return (at(1) - at(-1)) / (2.0 * h);
    case 2: return (at(1) - 2.0 * at(0) + at(-1)) / (h * h);
    case 3: return (at(2) - 2.0 * at(1) + 2.0 * at(-1) - at(-2)) / (2.0 * h * h * h);
    case 4: return (at(2) - 4.0 * at(1) + 6.0 * at(0) - 4.0 * at(-1) + at(-2)) / (h * h * h * h);
    default: throw Error("derivative order must be 1..4");
  }
}

template <class Scalar>
std::pair<Scalar, double> derivative_impl(const Eigen::VectorXd& t,
                                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f,
                                          int order, double at, double tol) {
  if (t.size() < 5) throw Error("derivative grid too short");
  const double h0 = t[1] - t[0];
  for (Index i = 1; i < t.size(); ++i)
    if (std::abs((t[i] - t[i - 1]) - h0) > 1e-9 * std::max(1.0, std::abs(h0)))
      throw Error("derivative grid must be uniform");
  Index i0 = -1;
  for (Index i = 0; i < t.size(); ++i)
    if (std::abs(t[i] - at) < 1e-12) i0 = i;
  if (i0 < 0) throw Error("derivative point must lie on the grid");
  const int reach = (order >= 3) ? 2 : 1;
  if (i0 - 2 * reach < 0 || i0 + 2 * reach >= t.size())
    throw Error("derivative grid does not cover the stencil");

  const Scalar d1 = stencil(f, i0, 1, order, h0);
  const Scalar d2 = stencil(f, i0, 2, order, 2.0 * h0);
  const Scalar rich = (4.0 * d1 - d2) / 3.0;
  const double disagreement = std::abs(d1 - d2) / 3.0;
  if (disagreement > 10.0 * std::max(tol, 1e-14 * std::abs(rich)))
    throw UnstableStencil("step-halving disagreement " + std::to_string(disagreement));
  return {rich, disagreement};
}

}  // namespace

DerivativeResult derivative_on_grid(const Eigen::VectorXd& t, const Eigen::VectorXd& f, int order,
                                    double at, double tol) {
  auto [v, e] = derivative_impl<double>(t, f, order, at, tol);
  return {v, e};
}

DerivativeResultC derivative_on_grid(const Eigen::VectorXd& t, const Eigen::VectorXcd& f,
                                     int order, double at, double tol) {
  auto [v, e] = derivative_impl<Complex>(t, f, order, at, tol);
  return {v, e};
}

}  // namespace markovshift
