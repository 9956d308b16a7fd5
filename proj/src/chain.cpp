#include "markovshift/chain.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <thread>

#include "markovshift/rng.hpp"

namespace markovshift {

namespace {

constexpr double kStochTol = 1e-12;

Eigen::VectorXd extend_right(const Eigen::VectorXd& law, int alphabet,
                             const Eigen::MatrixXd& kernel) {
  const Index n = law.size();
  Eigen::VectorXd out(n * alphabet);
  for (Index a = 0; a < n; ++a) {
    const int end_state = static_cast<int>(a % alphabet);
    for (int y = 0; y < alphabet; ++y) out[a * alphabet + y] = law[a] * kernel(end_state, y);
  }
  return out;
}

Eigen::VectorXd window_block_law(const ChainContext& ctx, Index lo, Index hi) {
  Eigen::VectorXd law = ctx.marg.law(lo);
  for (Index m = lo; m < hi; ++m) law = extend_right(law, ctx.alphabet(), ctx.chain.kernel(m));
  return law;
}

}  // namespace

void KernelSequence::validate() const {
  if (alphabet < 1) throw Error("alphabet must be positive");
  if (initial_law.size() != alphabet) throw Error("initial law has wrong size");
  if (initial_law.minCoeff() < -kStochTol) throw Error("initial law has negative entries");
  if (std::abs(initial_law.sum() - 1.0) > kStochTol) throw Error("initial law does not sum to 1");
  for (size_t j = 0; j < kernels.size(); ++j) {
    const auto& q = kernels[j];
    if (q.rows() != alphabet || q.cols() != alphabet)
      throw Error("kernel " + std::to_string(j) + " has wrong shape");
    if (q.minCoeff() < -kStochTol)
      throw Error("kernel " + std::to_string(j) + " has negative entries");
    for (int x = 0; x < alphabet; ++x)
      if (std::abs(q.row(x).sum() - 1.0) > kStochTol)
        throw Error("kernel " + std::to_string(j) + " row " + std::to_string(x) +
                    " does not sum to 1");
  }
}

MarginalTable marginals(const KernelSequence& chain) {
  MarginalTable table;
  table.laws.reserve(static_cast<size_t>(chain.horizon()) + 1);
  table.laws.push_back(chain.initial_law);
  for (Index j = 0; j < chain.horizon(); ++j)
    table.laws.push_back(chain.kernel(j).transpose() * table.laws.back());
  return table;
}

BackwardKernelSequence backward_kernels(const KernelSequence& chain, const MarginalTable& marg) {
  BackwardKernelSequence back;
  const int a = chain.alphabet;
  back.kernels.reserve(static_cast<size_t>(chain.horizon()));
  back.defined.reserve(static_cast<size_t>(chain.horizon()));
  for (Index j = 0; j < chain.horizon(); ++j) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(a, a);
    std::vector<bool> def(static_cast<size_t>(a), false);
    for (int x = 0; x < a; ++x) {
      const double px = marg.law(j + 1)[x];
      if (px <= 0.0) continue;
      def[static_cast<size_t>(x)] = true;
      for (int y = 0; y < a; ++y) b(x, y) = marg.law(j)[y] * chain.kernel(j)(y, x) / px;
    }
    back.kernels.push_back(std::move(b));
    back.defined.push_back(std::move(def));
  }
  return back;
}

BackwardKernelSequence strict_backward_kernels(const KernelSequence& chain,
                                               const MarginalTable& marg) {
  for (Index j = 0; j < chain.horizon(); ++j)
    for (int x = 0; x < chain.alphabet; ++x)
      if (marg.law(j + 1)[x] <= 0.0) throw ZeroMarginal(j + 1, x);
  return backward_kernels(chain, marg);
}

ChainContext make_context(KernelSequence chain) {
  chain.validate();
  ChainContext ctx;
  ctx.chain = std::move(chain);
  ctx.marg = marginals(ctx.chain);
  ctx.back = backward_kernels(ctx.chain, ctx.marg);
  return ctx;
}

Eigen::VectorXd stationary_law(const Eigen::MatrixXd& kernel) {
  const int a = static_cast<int>(kernel.rows());
  Eigen::MatrixXd sys(a + 1, a);
  sys.topRows(a) = Eigen::MatrixXd::Identity(a, a) - kernel.transpose();
  sys.row(a).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(a + 1);
  rhs[a] = 1.0;
  Eigen::VectorXd pi = sys.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return pi;
}

PathEnsemble sample_paths(const ChainContext& ctx, Index n_replicas, Index window_start,
                          Index window_length, std::uint64_t seed, int threads) {
  if (window_start < 0 || window_start + window_length - 1 > ctx.horizon())
    throw HorizonExceeded("sample window exceeds chain horizon");
  PathEnsemble out;
  out.seed = seed;
  out.window_start = window_start;
  out.paths.resize(n_replicas, window_length);
  out.stream_ids.resize(static_cast<size_t>(n_replicas));

  const Eigen::VectorXd& start_law = ctx.marg.law(window_start);
  auto run = [&](Index r0, Index r1) {
    for (Index r = r0; r < r1; ++r) {
      out.stream_ids[static_cast<size_t>(r)] = SplitMix64::mix(seed ^ static_cast<std::uint64_t>(r));
      SplitMix64 rng(seed, static_cast<std::uint64_t>(r));
      double u = rng.next_double();
      int x = 0;
      double acc = start_law[0];
      while (x + 1 < ctx.alphabet() && u >= acc) acc += start_law[++x];
      out.paths(r, 0) = x;
      for (Index m = 1; m < window_length; ++m) {
        const auto& row = ctx.chain.kernel(window_start + m - 1).row(x);
        u = rng.next_double();
        int y = 0;
        acc = row[0];
        while (y + 1 < ctx.alphabet() && u >= acc) acc += row[++y];
        x = y;
        out.paths(r, m) = x;
      }
    }
  };

  if (threads <= 1 || n_replicas < 256) {
    run(0, n_replicas);
  } else {
    std::vector<std::thread> pool;
    const Index chunk = (n_replicas + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const Index lo = t * chunk, hi = std::min<Index>(n_replicas, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

double psi_upper_first_order(const ChainContext& ctx, Index j_lo, Index j_hi) {
  double best = 0.0;
  for (Index j = j_lo; j < j_hi; ++j) {
    const auto& q = ctx.chain.kernel(j);
    const auto& pi_next = ctx.marg.law(j + 1);
    const auto& pi = ctx.marg.law(j);
    for (int x = 0; x < ctx.alphabet(); ++x) {
      if (pi[x] <= 0.0) continue;
      for (int y = 0; y < ctx.alphabet(); ++y) {
        if (pi_next[y] <= 0.0) continue;
        best = std::max(best, q(x, y) / pi_next[y] - 1.0);
      }
    }
  }
  return best;
}

namespace {

struct BlockJoint {
  Eigen::MatrixXd joint;   // past atoms x future atoms
  Eigen::VectorXd p_past;  // marginal over past atoms
  Eigen::VectorXd q_fut;   // marginal over future atoms
  bool dropped_atoms = false;
};

BlockJoint block_joint_law(const ChainContext& ctx, Index j, Index lag, int wp, int wf) {
  const int a = ctx.alphabet();
  const Index past_lo = j - wp + 1, past_hi = j;
  const Index fut_lo = j + lag, fut_hi = j + lag + wf - 1;
  Eigen::VectorXd past = window_block_law(ctx, past_lo, past_hi);

  Eigen::MatrixXd gap = Eigen::MatrixXd::Identity(a, a);
  for (Index m = past_hi; m < fut_lo; ++m) gap = gap * ctx.chain.kernel(m);

  // conditional law of the future block given its first coordinate
  const Index nf = checked_table_size(a, wf);
  Eigen::MatrixXd fut_cond = Eigen::MatrixXd::Zero(a, nf);
  for (int s = 0; s < a; ++s) {
    Eigen::VectorXd law = Eigen::VectorXd::Zero(a);
    law[s] = 1.0;
    for (Index m = fut_lo; m < fut_hi; ++m) law = extend_right(law, a, ctx.chain.kernel(m));
    fut_cond.row(s) = law.transpose();
  }

  BlockJoint out;
  const Index np = past.size();
  out.joint.resize(np, nf);
  for (Index u = 0; u < np; ++u) {
    const int end_state = static_cast<int>(u % a);
    for (Index v = 0; v < nf; ++v) {
      const int first_fut = static_cast<int>(v / (nf / a));
      out.joint(u, v) = past[u] * gap(end_state, first_fut) * fut_cond(first_fut, v);
    }
  }
  out.p_past = out.joint.rowwise().sum();
  out.q_fut = out.joint.colwise().sum().transpose();
  return out;
}

double lp_norm_weighted(const Eigen::VectorXd& values, const Eigen::VectorXd& weights, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (Index i = 0; i < values.size(); ++i)
      if (weights[i] > 0.0) m = std::max(m, std::abs(values[i]));
    return m;
  }
  double s = 0.0;
  for (Index i = 0; i < values.size(); ++i)
    s += weights[i] * std::pow(std::abs(values[i]), p);
  return std::pow(s, 1.0 / p);
}

MixingValue rho_value(const BlockJoint& bj) {
  MixingValue mv;
  std::vector<Index> pa, fa;
  for (Index i = 0; i < bj.p_past.size(); ++i)
    if (bj.p_past[i] > 0.0) pa.push_back(i);
  for (Index i = 0; i < bj.q_fut.size(); ++i)
    if (bj.q_fut[i] > 0.0) fa.push_back(i);
  if (static_cast<Index>(pa.size()) < bj.p_past.size() ||
      static_cast<Index>(fa.size()) < bj.q_fut.size()) {
    mv.warnings.push_back("zero-probability atoms dropped");
  }
  if (pa.empty() || fa.empty()) throw DegenerateBlock("all block atoms have probability zero");
  Eigen::MatrixXd m(pa.size(), fa.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (size_t k = 0; k < fa.size(); ++k) {
      const double pq = bj.p_past[pa[i]] * bj.q_fut[fa[k]];
      m(i, k) = (bj.joint(pa[i], fa[k]) - pq) / std::sqrt(pq);
    }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  mv.value = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  mv.method = MixingMethod::exact;
  return mv;
}

MixingValue psi_value(const BlockJoint& bj) {
  MixingValue mv;
  bool dropped = false;
  double best = 0.0;
  for (Index i = 0; i < bj.p_past.size(); ++i) {
    for (Index k = 0; k < bj.q_fut.size(); ++k) {
      const double pq = bj.p_past[i] * bj.q_fut[k];
      if (pq <= 0.0) {
        dropped = true;
        continue;
      }
      best = std::max(best, std::abs(bj.joint(i, k) / pq - 1.0));
    }
  }
  if (dropped) mv.warnings.push_back("zero-probability atoms dropped");
  mv.value = best;
  mv.method = MixingMethod::exact;
  return mv;
}

double tv_past_given_event(const BlockJoint& bj, const std::vector<Index>& atoms) {
  double pa = 0.0;
  for (Index k : atoms) pa += bj.q_fut[k];
  if (pa <= 0.0) return -1.0;
  double tv = 0.0;
  for (Index i = 0; i < bj.p_past.size(); ++i) {
    double cond = 0.0;
    for (Index k : atoms) cond += bj.joint(i, k);
    tv += std::abs(cond / pa - bj.p_past[i]);
  }
  return 0.5 * tv;
}

MixingValue phi_value(const BlockJoint& bj) {
  MixingValue mv;
  const Index nf = bj.q_fut.size();
  std::vector<Index> fa;
  for (Index k = 0; k < nf; ++k)
    if (bj.q_fut[k] > 0.0) fa.push_back(k);
  if (fa.size() < static_cast<size_t>(nf)) mv.warnings.push_back("zero-probability atoms dropped");
  if (fa.empty()) throw DegenerateBlock("future block has no atoms of positive probability");

  const size_t n = fa.size();
  if (n <= 12) {  // exhaustive sup over conditioning events
    double best = 0.0;
    for (std::uint64_t mask = 1; mask < (std::uint64_t(1) << n); ++mask) {
      std::vector<Index> atoms;
      for (size_t b = 0; b < n; ++b)
        if (mask & (std::uint64_t(1) << b)) atoms.push_back(fa[b]);
      best = std::max(best, tv_past_given_event(bj, atoms));
    }
    mv.value = best;
    mv.method = MixingMethod::exact;
  } else {  // atoms and atom complements give a certified lower bound
    double best = 0.0;
    for (size_t b = 0; b < n; ++b) {
      best = std::max(best, tv_past_given_event(bj, {fa[b]}));
      std::vector<Index> comp;
      for (size_t c = 0; c < n; ++c)
        if (c != b) comp.push_back(fa[c]);
      if (!comp.empty()) best = std::max(best, tv_past_given_event(bj, comp));
    }
    mv.value = best;
    mv.method = MixingMethod::atom_lower_bound;
    mv.upper = std::min(1.0, 0.5 * psi_value(bj).value);
  }
  return mv;
}

MixingValue varpi_value(const BlockJoint& bj, double q, double p) {
  MixingValue mv;
  const Index np = bj.p_past.size(), nf = bj.q_fut.size();
  // deviation functional for a candidate g on past atoms
  auto deviation = [&](const Eigen::VectorXd& g) {
    const double nq = lp_norm_weighted(g, bj.p_past, q);
    if (nq <= 0.0) return 0.0;
    double mean = 0.0;
    for (Index i = 0; i < np; ++i) mean += bj.p_past[i] * g[i];
    Eigen::VectorXd dev(nf);
    for (Index k = 0; k < nf; ++k) {
      if (bj.q_fut[k] <= 0.0) {
        dev[k] = 0.0;
        continue;
      }
      double c = 0.0;
      for (Index i = 0; i < np; ++i) c += bj.joint(i, k) * g[i];
      dev[k] = c / bj.q_fut[k] - mean;
    }
    return lp_norm_weighted(dev, bj.q_fut, p) / nq;
  };

  double best = 0.0;
  // atom-style extremes
  for (Index i = 0; i < np; ++i) {
    if (bj.p_past[i] <= 0.0) continue;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(np);
    g[i] = 1.0;
    best = std::max(best, deviation(g));
  }
  // random search with sign vectors
  SplitMix64 rng(0x9d2c5680u);
  for (int trial = 0; trial < 512; ++trial) {
    Eigen::VectorXd g(np);
    for (Index i = 0; i < np; ++i)
      g[i] = (trial % 2 == 0) ? rng.next_double(-1.0, 1.0)
                              : (rng.next_double() < 0.5 ? -1.0 : 1.0);
    best = std::max(best, deviation(g));
  }
  mv.value = best;
  mv.method = MixingMethod::search_lower_bound;
  mv.upper = psi_value(bj).value;
  return mv;
}

}  // namespace

MixingValue mixing_coefficient(const ChainContext& ctx, MixingKind kind, Index lag,
                               int past_window, int future_window, double q, double p,
                               std::optional<Index> at_index) {
  if (lag < 1) throw Error("mixing lag must be >= 1");
  std::vector<Index> js;
  if (at_index) {
    js.push_back(*at_index);
  } else {
    for (Index j = past_window - 1; j + lag + future_window - 1 <= ctx.horizon(); ++j)
      js.push_back(j);
  }
  if (js.empty()) throw Error("windows do not fit the chain horizon");

  MixingValue out;
  bool first = true;
  for (Index j : js) {
    if (j - past_window + 1 < 0 || j + lag + future_window - 1 > ctx.horizon())
      throw HorizonExceeded("mixing windows exceed horizon");
    BlockJoint bj = block_joint_law(ctx, j, lag, past_window, future_window);
    MixingValue mv;
    switch (kind) {
      case MixingKind::rho: mv = rho_value(bj); break;
      case MixingKind::psi: mv = psi_value(bj); break;
      case MixingKind::phi_reverse: mv = phi_value(bj); break;
      case MixingKind::varpi: mv = varpi_value(bj, q, p); break;
    }
    if (first || mv.value > out.value) {
      const auto warn = out.warnings;
      out = mv;
      if (!first)
        out.warnings.insert(out.warnings.end(), warn.begin(), warn.end());
      first = false;
    } else if (mv.upper && out.upper && *mv.upper > *out.upper) {
      out.upper = mv.upper;  // keep the worst certified upper bound over j
    }
  }
  return out;
}

MixingProfile mixing_profile(const ChainContext& ctx, MixingKind kind, const std::vector<Index>& lags,
                             int past_window, int future_window, double q, double p) {
  MixingProfile prof;
  prof.kind = kind;
  prof.exponent_q = q;
  prof.exponent_p = p;
  prof.past_window = past_window;
  prof.future_window = future_window;
  for (Index lag : lags)
    prof.values[lag] = mixing_coefficient(ctx, kind, lag, past_window, future_window, q, p);
  return prof;
}

DoeblinConstants doeblin_constants(const KernelSequence& chain, const MarginalTable& reference) {
  DoeblinConstants out;
  out.c1 = std::numeric_limits<double>::infinity();
  out.c2 = 0.0;
  for (Index j = 0; j < chain.horizon(); ++j) {
    const auto& ref = reference.law(j + 1);
    if (ref.minCoeff() <= 0.0) throw ZeroReference("reference law must be strictly positive");
    for (int x = 0; x < chain.alphabet; ++x)
      for (int y = 0; y < chain.alphabet; ++y) {
        const double r = chain.kernel(j)(x, y) / ref[y];
        out.c1 = std::min(out.c1, r);
        out.c2 = std::max(out.c2, r);
      }
  }
  return out;
}

std::vector<int> environment_orbit(const EnvironmentSpec& spec, Index length) {
  std::vector<int> orbit(static_cast<size_t>(length));
  if (spec.kind == "cyclic") {
    if (spec.orbit.empty()) throw ConfigError("cyclic environment needs a nonempty orbit");
    for (Index j = 0; j < length; ++j)
      orbit[static_cast<size_t>(j)] =
          spec.orbit[static_cast<size_t>((spec.phase + j) % static_cast<Index>(spec.orbit.size()))];
  } else if (spec.kind == "rotation") {
    if (spec.bins < 1) throw ConfigError("rotation environment needs bins >= 1");
    for (Index j = 0; j < length; ++j) {
      double t = spec.theta0 + static_cast<double>(j + spec.phase) * spec.alpha;
      t -= std::floor(t);
      int b = static_cast<int>(std::floor(t * spec.bins));
      orbit[static_cast<size_t>(j)] = std::min(b, spec.bins - 1);
    }
  } else if (spec.kind == "markov") {
    const int m = static_cast<int>(spec.env_kernel.rows());
    if (m < 1) throw ConfigError("markov environment needs a kernel");
    SplitMix64 rng(spec.seed, 0xe14);
    int s = spec.start_state;
    for (Index skip = 0; skip < spec.phase; ++skip) {
      double u = rng.next_double();
      int y = 0;
      double acc = spec.env_kernel(s, 0);
      while (y + 1 < m && u >= acc) acc += spec.env_kernel(s, ++y);
      s = y;
    }
    for (Index j = 0; j < length; ++j) {
      orbit[static_cast<size_t>(j)] = s;
      double u = rng.next_double();
      int y = 0;
      double acc = spec.env_kernel(s, 0);
      while (y + 1 < m && u >= acc) acc += spec.env_kernel(s, ++y);
      s = y;
    }
  } else {
    throw ConfigError("unknown environment kind: " + spec.kind);
  }
  return orbit;
}

namespace {

Eigen::MatrixXd perturbed_kernel(const Eigen::MatrixXd& base, double eps, std::uint64_t seed,
                                 Index j) {
  const int a = static_cast<int>(base.rows());
  Eigen::MatrixXd q = base;
  if (eps == 0.0) return q;
  for (int x = 0; x < a; ++x) {
    SplitMix64 rng(seed, static_cast<std::uint64_t>(j) * 0x100000001b3ull + x);
    Eigen::VectorXd e(a);
    for (int y = 0; y < a; ++y) e[y] = rng.next_double(-1.0, 1.0);
    e.array() -= e.mean();  // row-sum zero
    q.row(x) += eps * e.transpose();
    for (int y = 0; y < a; ++y) q(x, y) = std::max(q(x, y), 0.0);
    q.row(x) /= q.row(x).sum();
  }
  return q;
}

}  // namespace

KernelSequence make_chain(const ChainSpec& spec) {
  KernelSequence chain;
  chain.alphabet = spec.alphabet;
  chain.kernels.reserve(static_cast<size_t>(spec.horizon));

  if (spec.kind == "homogeneous") {
    for (Index j = 0; j < spec.horizon; ++j) chain.kernels.push_back(spec.kernel);
    chain.initial_law = spec.initial.value_or(stationary_law(spec.kernel));
  } else if (spec.kind == "perturbed") {
    for (Index j = 0; j < spec.horizon; ++j)
      chain.kernels.push_back(perturbed_kernel(spec.kernel, spec.epsilon, spec.seed, j));
    chain.initial_law = spec.initial.value_or(stationary_law(spec.kernel));
  } else if (spec.kind == "parry") {
    const int a = spec.alphabet;
    if (spec.adjacency.rows() != a || spec.adjacency.cols() != a)
      throw ConfigError("parry adjacency has wrong shape");
    for (int x = 0; x < a; ++x)
      for (int y = 0; y < a; ++y) {
        const double v = spec.adjacency(x, y);
        if (v != 0.0 && v != 1.0) throw ConfigError("parry adjacency must be 0-1");
      }
    // primitivity: some boolean power of A is strictly positive
    Eigen::MatrixXd b = spec.adjacency;
    bool primitive = b.minCoeff() > 0.0;
    for (int m = 1; m <= a * a && !primitive; ++m) {
      b = (b * spec.adjacency).unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
      primitive = b.minCoeff() > 0.0;
    }
    if (!primitive) throw NotPrimitive("adjacency matrix is not primitive");
    // top eigenpair by power iteration
    Eigen::VectorXd u = Eigen::VectorXd::Ones(a);
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      Eigen::VectorXd v = spec.adjacency * u;
      const double nl = v.maxCoeff();
      v /= nl;
      if ((v - u).cwiseAbs().maxCoeff() < 1e-16 && it > 8) {
        u = v;
        lambda = nl;
        break;
      }
      u = v;
      lambda = nl;
    }
    Eigen::MatrixXd q(a, a);
    for (int x = 0; x < a; ++x) {
      for (int y = 0; y < a; ++y) q(x, y) = spec.adjacency(x, y) * u[y] / (lambda * u[x]);
      q.row(x) /= q.row(x).sum();
    }
    for (Index j = 0; j < spec.horizon; ++j) chain.kernels.push_back(q);
    chain.initial_law = spec.initial.value_or(stationary_law(q));
  } else if (spec.kind == "environment") {
    if (spec.env_kernels.empty()) throw ConfigError("environment chain needs env_kernels");
    const std::vector<int> orbit = environment_orbit(spec.environment, spec.horizon);
    for (Index j = 0; j < spec.horizon; ++j) {
      const int w = orbit[static_cast<size_t>(j)];
      if (w < 0 || static_cast<size_t>(w) >= spec.env_kernels.size())
        throw ConfigError("environment orbit leaves the kernel family");
      chain.kernels.push_back(spec.env_kernels[static_cast<size_t>(w)]);
    }
    chain.initial_law =
        spec.initial.value_or(stationary_law(spec.env_kernels[static_cast<size_t>(orbit[0])]));
  } else {
    throw ConfigError("unknown chain kind: " + spec.kind);
  }
  chain.validate();
  return chain;
}

}  // namespace markovshift
