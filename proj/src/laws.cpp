#include "markovshift/laws.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "markovshift/normal.hpp"

namespace markovshift {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}
}  // namespace

Eigen::VectorXd extend_window_law(const Eigen::VectorXd& law, int alphabet,
                                  const Eigen::MatrixXd& kernel) {
  const Index n = law.size();
  Eigen::VectorXd out(n * alphabet);
  for (Index a = 0; a < n; ++a) {
    const int end_state = static_cast<int>(a % alphabet);
    for (int y = 0; y < alphabet; ++y) out[a * alphabet + y] = law[a] * kernel(end_state, y);
  }
  return out;
}

Eigen::VectorXd window_law(const ChainContext& ctx, Index lo, Index hi) {
  if (lo < 0 || hi > ctx.horizon()) throw HorizonExceeded("window exceeds chain horizon");
  checked_table_size(ctx.alphabet(), static_cast<int>(hi - lo + 1));
  Eigen::VectorXd law = ctx.marg.law(lo);
  for (Index m = lo; m < hi; ++m) law = extend_window_law(law, ctx.alphabet(), ctx.chain.kernel(m));
  return law;
}

double observable_mean(const WindowObservable& f, const ChainContext& ctx) {
  return window_law(ctx, f.lo(), f.hi()).dot(f.table);
}

double observable_lp(const WindowObservable& f, const ChainContext& ctx, double p,
                     SupConvention conv) {
  if (std::isinf(p)) {
    if (conv == SupConvention::full_table) return f.table.cwiseAbs().maxCoeff();
    const Eigen::VectorXd law = window_law(ctx, f.lo(), f.hi());
    double m = 0.0;
    for (Index i = 0; i < law.size(); ++i)
      if (law[i] > 0.0) m = std::max(m, std::abs(f.table[i]));
    return m;
  }
  const Eigen::VectorXd law = window_law(ctx, f.lo(), f.hi());
  double s = 0.0;
  for (Index i = 0; i < law.size(); ++i) s += law[i] * std::pow(std::abs(f.table[i]), p);
  return std::pow(s, 1.0 / p);
}

double observable_moment(const WindowObservable& f, const ChainContext& ctx, int k) {
  const Eigen::VectorXd law = window_law(ctx, f.lo(), f.hi());
  double s = 0.0;
  for (Index i = 0; i < law.size(); ++i) s += law[i] * std::pow(f.table[i], k);
  return s;
}

double observable_cov(const WindowObservable& fa, const WindowObservable& fb,
                      const ChainContext& ctx) {
  const WindowObservable& f = (fa.lo() <= fb.lo()) ? fa : fb;
  const WindowObservable& g = (fa.lo() <= fb.lo()) ? fb : fa;
  if (g.lo() <= f.hi()) {  // overlapping windows: joint table
    const Index lo = f.lo(), hi = std::max(f.hi(), g.hi());
    const Eigen::VectorXd law = window_law(ctx, lo, hi);
    const WindowObservable fe = embed(f, lo, hi);
    const WindowObservable ge = embed(g, lo, hi);
    const double ef = law.dot(fe.table), eg = law.dot(ge.table);
    double efg = 0.0;
    for (Index i = 0; i < law.size(); ++i) efg += law[i] * fe.table[i] * ge.table[i];
    return efg - ef * eg;
  }
  // separated windows: propagate the f-weighted end-state mass across the gap
  const int a = ctx.alphabet();
  const Eigen::VectorXd law_f = window_law(ctx, f.lo(), f.hi());
  const double ef = law_f.dot(f.table);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(a);
  for (Index u = 0; u < law_f.size(); ++u)
    c[static_cast<Index>(u % a)] += law_f[u] * (f.table[u] - ef);
  for (Index m = f.hi(); m < g.lo(); ++m) c = ctx.chain.kernel(m).transpose() * c;
  Eigen::VectorXd w = c;
  for (Index m = g.lo(); m < g.hi(); ++m) w = extend_window_law(w, a, ctx.chain.kernel(m));
  const double eg = window_law(ctx, g.lo(), g.hi()).dot(g.table);
  double s = 0.0;
  for (Index v = 0; v < w.size(); ++v) s += w[v] * (g.table[v] - eg);
  return s;
}

namespace {

struct SweepShape {
  Index j0 = 0;
  Index n = 0;
  int left = 0, right = 0;
  int alphabet = 2;

  static SweepShape of(const std::vector<WindowObservable>& fs) {
    if (fs.empty()) throw Error("empty observable family");
    SweepShape s;
    s.j0 = fs[0].base;
    s.n = static_cast<Index>(fs.size());
    s.left = fs[0].left;
    s.right = fs[0].right;
    s.alphabet = fs[0].alphabet;
    for (size_t i = 0; i < fs.size(); ++i) {
      if (fs[i].base != s.j0 + static_cast<Index>(i) || fs[i].left != s.left ||
          fs[i].right != s.right || fs[i].alphabet != s.alphabet)
        throw Error("observable family must be consecutive with a common window shape");
    }
    return s;
  }
  int state_width() const { return left + right + 1; }
};

}  // namespace

SumMoments sum_moments(const std::vector<WindowObservable>& fs, const ChainContext& ctx) {
  const SweepShape sh = SweepShape::of(fs);
  const int a = sh.alphabet;
  const int sw = sh.state_width();
  const Index ns = checked_table_size(a, sw);
  if (sh.j0 - sh.left < 0 || sh.j0 + sh.n - 1 + sh.right > ctx.horizon())
    throw HorizonExceeded("observable windows exceed chain horizon");

  std::vector<double> means(static_cast<size_t>(sh.n));
  for (size_t i = 0; i < fs.size(); ++i) means[i] = observable_mean(fs[i], ctx);

  // mu[i](state) = E[(centered partial sum)^i ; window configuration = state]
  std::array<Eigen::VectorXd, 5> mu;
  mu[0] = window_law(ctx, sh.j0 - sh.left, sh.j0 + sh.right);
  for (int i = 1; i <= 4; ++i) mu[i] = Eigen::VectorXd::Zero(ns);

  auto complete = [&](Index k) {
    const double mean_k = means[static_cast<size_t>(k - sh.j0)];
    const Eigen::VectorXd& tb = fs[static_cast<size_t>(k - sh.j0)].table;
    for (Index s = 0; s < ns; ++s) {
      const double c = tb[s] - mean_k;
      const double c2 = c * c;
      mu[4][s] += 4 * c * mu[3][s] + 6 * c2 * mu[2][s] + 4 * c2 * c * mu[1][s] + c2 * c2 * mu[0][s];
      mu[3][s] += 3 * c * mu[2][s] + 3 * c2 * mu[1][s] + c2 * c * mu[0][s];
      mu[2][s] += 2 * c * mu[1][s] + c2 * mu[0][s];
      mu[1][s] += c * mu[0][s];
    }
  };

  complete(sh.j0);
  const Index tail = ns / a;  // states share the trailing sw-1 coordinates
  for (Index m = sh.j0 + sh.right + 1; m <= sh.j0 + sh.n - 1 + sh.right; ++m) {
    const Eigen::MatrixXd& q = ctx.chain.kernel(m - 1);
    std::array<Eigen::VectorXd, 5> nxt;
    for (int i = 0; i <= 4; ++i) nxt[i] = Eigen::VectorXd::Zero(ns);
    for (Index s = 0; s < ns; ++s) {
      if (mu[0][s] == 0.0 && mu[2][s] == 0.0 && mu[4][s] == 0.0) continue;
      const int last = static_cast<int>(s % a);
      const Index base = (s % tail) * a;
      for (int y = 0; y < a; ++y) {
        const double w = q(last, y);
        if (w == 0.0) continue;
        const Index t = base + y;
        for (int i = 0; i <= 4; ++i) nxt[i][t] += w * mu[i][s];
      }
    }
    mu = std::move(nxt);
    complete(m - sh.right);
  }

  SumMoments out;
  double mean_sum = 0.0;
  for (double m : means) mean_sum += m;
  out.mean = mean_sum;
  out.var = mu[2].sum();
  out.m3 = mu[3].sum();
  out.m4 = mu[4].sum();
  return out;
}

double sum_variance(const std::vector<WindowObservable>& fs, const ChainContext& ctx) {
  const SweepShape sh = SweepShape::of(fs);
  const int a = sh.alphabet;
  const int over = sh.left + sh.right;
  double var = 0.0;
  for (Index k = 0; k < sh.n; ++k) {
    const auto& f = fs[static_cast<size_t>(k)];
    var += observable_cov(f, f, ctx);
    for (Index d = 1; d <= std::min<Index>(over, sh.n - 1 - k); ++d)
      var += 2.0 * observable_cov(f, fs[static_cast<size_t>(k + d)], ctx);
  }
  if (sh.n <= over + 1) return var;

  // far pairs: carry the f-weighted end-state mass forward
  std::vector<double> means(static_cast<size_t>(sh.n));
  std::vector<Eigen::VectorXd> laws(static_cast<size_t>(sh.n));
  for (size_t i = 0; i < fs.size(); ++i) {
    laws[i] = window_law(ctx, fs[i].lo(), fs[i].hi());
    means[i] = laws[i].dot(fs[i].table);
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(a);
  Index pos = sh.j0 + sh.right;  // position of c
  for (Index l = sh.j0 + over + 1; l < sh.j0 + sh.n; ++l) {
    const Index read_pos = l - sh.left;
    while (pos < read_pos) {
      const Index k = pos - sh.right;  // insert f_k whose window ends at pos
      if (k >= sh.j0 && k < sh.j0 + sh.n) {
        const auto& f = fs[static_cast<size_t>(k - sh.j0)];
        const auto& law = laws[static_cast<size_t>(k - sh.j0)];
        const double mk = means[static_cast<size_t>(k - sh.j0)];
        for (Index u = 0; u < law.size(); ++u)
          c[static_cast<Index>(u % a)] += law[u] * (f.table[u] - mk);
      }
      c = ctx.chain.kernel(pos).transpose() * c;
      ++pos;
    }
    Eigen::VectorXd w = c;
    const auto& g = fs[static_cast<size_t>(l - sh.j0)];
    for (Index m = g.lo(); m < g.hi(); ++m) w = extend_window_law(w, a, ctx.chain.kernel(m));
    const double mg = means[static_cast<size_t>(l - sh.j0)];
    double s = 0.0;
    for (Index v = 0; v < w.size(); ++v) s += w[v] * (g.table[v] - mg);
    var += 2.0 * s;
  }
  return var;
}

namespace {

double gcd_double(double x, double y, double tol) {
  x = std::abs(x);
  y = std::abs(y);
  if (x < y) std::swap(x, y);
  while (y > tol) {
    double r = std::fmod(x, y);
    if (r > y - tol) r = 0.0;
    x = y;
    y = r;
  }
  return x;
}

}  // namespace

std::optional<LatticeSpec> detect_lattice(const std::vector<WindowObservable>& fs, double tol) {
  LatticeSpec spec;
  double step = 0.0;
  double scale = 1.0;
  for (const auto& f : fs) {
    const double mn = f.table.minCoeff();
    scale = std::max(scale, f.table.cwiseAbs().maxCoeff());
    for (Index i = 0; i < f.table.size(); ++i)
      step = gcd_double(step, f.table[i] - mn, tol);
  }
  spec.step = step;
  spec.offsets.reserve(fs.size());
  spec.residues.reserve(fs.size());
  Index span = 1;
  for (const auto& f : fs) {
    const double mn = f.table.minCoeff();
    spec.offsets.push_back(mn);
    std::vector<Index> res(static_cast<size_t>(f.table.size()), 0);
    Index kmax = 0;
    for (Index i = 0; i < f.table.size(); ++i) {
      if (step <= tol) {
        if (std::abs(f.table[i] - mn) > tol * scale) return std::nullopt;
        res[static_cast<size_t>(i)] = 0;
      } else {
        const double k = (f.table[i] - mn) / step;
        const Index ki = static_cast<Index>(std::llround(k));
        if (std::abs(k - static_cast<double>(ki)) > 1e-6) return std::nullopt;
        res[static_cast<size_t>(i)] = ki;
        kmax = std::max(kmax, ki);
      }
    }
    spec.residues.push_back(std::move(res));
    span += kmax;
  }
  if (spec.step <= tol) spec.step = 1.0;  // degenerate: every f_j is constant
  spec.span = span;
  spec.origin = 0.0;
  for (double o : spec.offsets) spec.origin += o;
  return spec;
}

LatticeLaw lattice_law(const std::vector<WindowObservable>& fs, const ChainContext& ctx,
                       Index span_limit) {
  const SweepShape sh = SweepShape::of(fs);
  const auto spec = detect_lattice(fs);
  if (!spec) throw NotLattice("observable values do not lie on a common lattice");
  if (spec->span > span_limit) throw SpanExceeded("lattice index span exceeds limit");
  const int a = sh.alphabet;
  const Index ns = checked_table_size(a, sh.state_width());
  if (sh.j0 - sh.left < 0 || sh.j0 + sh.n - 1 + sh.right > ctx.horizon())
    throw HorizonExceeded("observable windows exceed chain horizon");

  const Index span = spec->span;
  // logp[s * span + k]
  Eigen::VectorXd logp = Eigen::VectorXd::Constant(ns * span, kNegInf);
  {
    const Eigen::VectorXd init = window_law(ctx, sh.j0 - sh.left, sh.j0 + sh.right);
    for (Index s = 0; s < ns; ++s)
      if (init[s] > 0.0) logp[s * span] = std::log(init[s]);
  }
  Index used = 1;  // lattice slots filled so far

  auto complete = [&](Index j) {
    const auto& res = spec->residues[static_cast<size_t>(j - sh.j0)];
    Index kmax = 0;
    for (Index s = 0; s < ns; ++s) kmax = std::max(kmax, res[static_cast<size_t>(s)]);
    const Index new_used = std::min(span, used + kmax);
    for (Index s = 0; s < ns; ++s) {
      const Index shift = res[static_cast<size_t>(s)];
      if (shift == 0) continue;
      double* row = logp.data() + s * span;
      for (Index k = new_used - 1; k >= shift; --k) row[k] = row[k - shift];
      for (Index k = 0; k < shift; ++k) row[k] = kNegInf;
    }
    used = new_used;
  };

  complete(sh.j0);
  const Index tail = ns / a;
  Eigen::VectorXd nxt(ns * span);
  for (Index m = sh.j0 + sh.right + 1; m <= sh.j0 + sh.n - 1 + sh.right; ++m) {
    const Eigen::MatrixXd& q = ctx.chain.kernel(m - 1);
    nxt.head(ns * span).setConstant(kNegInf);
    for (Index s = 0; s < ns; ++s) {
      const int last = static_cast<int>(s % a);
      const Index base = (s % tail) * a;
      const double* row = logp.data() + s * span;
      for (int y = 0; y < a; ++y) {
        const double w = q(last, y);
        if (w <= 0.0) continue;
        const double lw = std::log(w);
        double* dst = nxt.data() + (base + y) * span;
        for (Index k = 0; k < used; ++k) {
          if (row[k] == kNegInf) continue;
          dst[k] = logaddexp(dst[k], row[k] + lw);
        }
      }
    }
    std::swap(logp, nxt);
    complete(m - sh.right);
  }

  LatticeLaw law;
  law.origin = spec->origin;
  law.step = spec->step;
  law.log_p = Eigen::VectorXd::Constant(span, kNegInf);
  for (Index s = 0; s < ns; ++s)
    for (Index k = 0; k < span; ++k)
      law.log_p[k] = logaddexp(law.log_p[k], logp[s * span + k]);
  return law;
}

double LatticeLaw::mass_check() const {
  double m = kNegInf;
  for (Index k = 0; k < log_p.size(); ++k) m = logaddexp(m, log_p[k]);
  return std::exp(m);
}

double LatticeLaw::mean() const {
  double s = 0.0;
  for (Index k = 0; k < log_p.size(); ++k)
    if (log_p[k] > kNegInf) s += std::exp(log_p[k]) * atom(k);
  return s;
}

double LatticeLaw::variance() const {
  const double m = mean();
  double s = 0.0;
  for (Index k = 0; k < log_p.size(); ++k)
    if (log_p[k] > kNegInf) s += std::exp(log_p[k]) * (atom(k) - m) * (atom(k) - m);
  return s;
}

double LatticeLaw::log_tail(double x, bool strict) const {
  double acc = kNegInf;
  for (Index k = log_p.size() - 1; k >= 0; --k) {
    const double v = atom(k);
    if (strict ? (v <= x) : (v < x)) break;
    acc = logaddexp(acc, log_p[k]);
  }
  return acc;
}

double lattice_kolmogorov(const LatticeLaw& law, double mean, double sigma) {
  double cum = 0.0;
  double best = 0.0;
  for (Index k = 0; k < law.size(); ++k) {
    const double p = std::exp(law.log_p[k]);
    if (p == 0.0 && cum == 0.0) continue;
    const double t = (law.atom(k) - mean) / sigma;
    const double phi = normal_cdf(t);
    best = std::max(best, std::abs(cum - phi));  // left limit
    cum += p;
    best = std::max(best, std::abs(cum - phi));  // right value
  }
  return best;
}

namespace {
// integral of |Phi(t) - c| over [lo, hi]
double abs_phi_minus_c(double lo, double hi, double c) {
  auto seg_above = [&](double x0, double x1) {  // Phi >= c on [x0, x1]
    return (normal_cdf_antiderivative(x1) - normal_cdf_antiderivative(x0)) - c * (x1 - x0);
  };
  auto seg_below = [&](double x0, double x1) {
    return c * (x1 - x0) - (normal_cdf_antiderivative(x1) - normal_cdf_antiderivative(x0));
  };
  if (c <= 0.0) return seg_above(lo, hi);
  if (c >= 1.0) return seg_below(lo, hi);
  const double q = normal_quantile(c);
  if (q <= lo) return seg_above(lo, hi);
  if (q >= hi) return seg_below(lo, hi);
  return seg_below(lo, q) + seg_above(q, hi);
}
}  // namespace

double lattice_wasserstein1(const LatticeLaw& law, double mean, double sigma) {
  std::vector<double> ts;
  std::vector<double> ps;
  for (Index k = 0; k < law.size(); ++k) {
    const double p = std::exp(law.log_p[k]);
    if (p > 0.0) {
      ts.push_back((law.atom(k) - mean) / sigma);
      ps.push_back(p);
    }
  }
  if (ts.empty()) throw Error("empty lattice law");
  double w = normal_cdf_antiderivative(ts.front());  // integral of Phi below the support
  double cum = 0.0;
  for (size_t i = 0; i + 1 < ts.size(); ++i) {
    cum += ps[i];
    w += abs_phi_minus_c(ts[i], ts[i + 1], cum);
  }
  const double s = ts.back();
  w += normal_pdf(s) - s * (1.0 - normal_cdf(s));  // integral of 1 - Phi above the support
  return w;
}

double lattice_wasserstein(const LatticeLaw& law, double mean, double sigma, double b) {
  if (b == 1.0) return lattice_wasserstein1(law, mean, sigma);
  double cum = 0.0;
  double acc = 0.0;
  const int nodes = 32;
  for (Index k = 0; k < law.size(); ++k) {
    const double p = std::exp(law.log_p[k]);
    if (p <= 0.0) continue;
    const double s = (law.atom(k) - mean) / sigma;
    const double u0 = std::max(cum, 1e-14), u1 = std::min(cum + p, 1.0 - 1e-14);
    cum += p;
    if (u1 <= u0) continue;
    const double h = (u1 - u0) / nodes;  // midpoint rule in the quantile variable
    for (int i = 0; i < nodes; ++i) {
      const double u = u0 + (i + 0.5) * h;
      acc += h * std::pow(std::abs(s - normal_quantile(u)), b);
    }
  }
  return std::pow(acc, 1.0 / b);
}

double lattice_weighted_kolmogorov(const LatticeLaw& law, double mean, double sigma, double s,
                                   double t_max) {
  double cum = 0.0;
  double best = 0.0;
  double prev_t = -t_max;
  auto weight = [&](double t) { return 1.0 + std::pow(std::abs(t), s); };
  auto visit = [&](double t, double f_val) {
    if (std::abs(t) <= t_max)
      best = std::max(best, weight(t) * std::abs(f_val - normal_cdf(t)));
  };
  // interior probes between atoms catch the weighted sup away from jumps
  for (Index k = 0; k < law.size(); ++k) {
    const double p = std::exp(law.log_p[k]);
    if (p == 0.0 && cum == 0.0) continue;
    const double t = (law.atom(k) - mean) / sigma;
    for (int i = 1; i <= 4; ++i)
      visit(prev_t + (t - prev_t) * i / 4.0, cum);
    visit(t, cum);
    cum += p;
    visit(t, cum);
    prev_t = t;
  }
  for (int i = 1; i <= 8; ++i) visit(prev_t + (t_max - prev_t) * i / 8.0, cum);
  return best;
}

}  // namespace markovshift
