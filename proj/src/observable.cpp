#include "markovshift/observable.hpp"

#include <algorithm>
#include <cmath>

#include "markovshift/laws.hpp"
#include "markovshift/rng.hpp"

namespace markovshift {

WindowObservable embed(const WindowObservable& f, Index new_lo, Index new_hi) {
  if (new_lo > f.lo() || new_hi < f.hi()) throw Error("embed target window does not contain source");
  if (new_lo == f.lo() && new_hi == f.hi()) return f;
  WindowObservable out;
  out.base = f.base;
  out.left = static_cast<int>(f.base - new_lo);
  out.right = static_cast<int>(new_hi - f.base);
  out.alphabet = f.alphabet;
  const TupleCodec oc = out.codec();
  const int pre = static_cast<int>(f.lo() - new_lo);
  out.table.resize(oc.size());
  Index stride = 1;
  for (Index k = f.hi(); k < new_hi; ++k) stride *= f.alphabet;
  Index block = stride;
  for (int k = 0; k < f.width(); ++k) block *= f.alphabet;
  for (Index id = 0; id < oc.size(); ++id) {
    const Index inner = (id % block) / stride;
    (void)pre;
    out.table[id] = f.table[inner];
  }
  return out;
}

WindowObservable shift_base(const WindowObservable& f, Index new_base) {
  WindowObservable out = f;
  out.base = new_base;
  return out;
}

WindowObservable combine(double a, const WindowObservable& f, double b,
                         const WindowObservable& g, Index base) {
  const Index lo = std::min(f.lo(), g.lo());
  const Index hi = std::max(f.hi(), g.hi());
  WindowObservable fe = embed(f, lo, hi);
  WindowObservable ge = embed(g, lo, hi);
  WindowObservable out = fe;
  out.base = base;
  out.left = static_cast<int>(base - lo);
  out.right = static_cast<int>(hi - base);
  out.table = a * fe.table + b * ge.table;
  return out;
}

WindowObservable pointwise_map(const WindowObservable& f, double (*fn)(double)) {
  WindowObservable out = f;
  for (Index i = 0; i < out.table.size(); ++i) out.table[i] = fn(f.table[i]);
  return out;
}

WindowObservable pointwise_power(const WindowObservable& f, int k) {
  WindowObservable out = f;
  for (Index i = 0; i < out.table.size(); ++i) out.table[i] = std::pow(f.table[i], k);
  return out;
}

namespace {

/// Conditional weight of the tuple (x_lo..x_{c-1}) given X_c, via backward kernels.
/// Returns -1 when some conditioning state has zero marginal (the caller treats
/// the whole tuple as probability zero).
double left_tail_weight(const ChainContext& ctx, Index lo, Index c, const std::vector<int>& outer,
                        int anchor_state) {
  double w = 1.0;
  int next = anchor_state;  // state at index m+1 while walking m = c-1 .. lo
  for (Index m = c - 1; m >= lo; --m) {
    if (!ctx.back.defined[static_cast<size_t>(m)][static_cast<size_t>(next)]) return -1.0;
    const int y = outer[static_cast<size_t>(m - lo)];
    w *= ctx.back.kernel(m)(next, y);
    next = y;
  }
  return w;
}

double right_tail_weight(const ChainContext& ctx, Index c, Index hi, const std::vector<int>& outer,
                         int anchor_state) {
  double w = 1.0;
  int prev = anchor_state;  // state at index m-1 while walking m = c+1 .. hi
  for (Index m = c + 1; m <= hi; ++m) {
    const int y = outer[static_cast<size_t>(m - c - 1)];
    w *= ctx.chain.kernel(m - 1)(prev, y);
    prev = y;
  }
  return w;
}

}  // namespace

WindowObservable cond_expect(const WindowObservable& f, const ChainContext& ctx, int r) {
  if (r < 0) throw Error("conditioning radius must be >= 0");
  const int out_left = std::min(f.left, r);
  const int out_right = std::min(f.right, r);
  if (out_left == f.left && out_right == f.right) return f;

  WindowObservable out;
  out.base = f.base;
  out.left = out_left;
  out.right = out_right;
  out.alphabet = f.alphabet;
  const TupleCodec oc = out.codec();
  const TupleCodec fc = f.codec();
  out.table.resize(oc.size());

  const int nl = f.left - out_left;   // integrated left coordinates
  const int nr = f.right - out_right; // integrated right coordinates
  const TupleCodec lc{f.alphabet, nl};
  const TupleCodec rc{f.alphabet, nr};

  std::vector<int> full(static_cast<size_t>(f.width()));
  for (Index id = 0; id < oc.size(); ++id) {
    const std::vector<int> inner = oc.decode(id);
    const int left_anchor = inner.front();
    const int right_anchor = inner.back();
    for (int k = 0; k < oc.width; ++k) full[static_cast<size_t>(nl + k)] = inner[static_cast<size_t>(k)];
    double acc = 0.0;
    bool undefined = false;
    for (Index li = 0; li < lc.size() && !undefined; ++li) {
      const std::vector<int> lt = lc.decode(li);
      double wl = 1.0;
      if (nl > 0) {
        wl = left_tail_weight(ctx, f.lo(), out.lo(), lt, left_anchor);
        if (wl < 0.0) {
          undefined = true;
          break;
        }
        for (int k = 0; k < nl; ++k) full[static_cast<size_t>(k)] = lt[static_cast<size_t>(k)];
      }
      for (Index ri = 0; ri < rc.size(); ++ri) {
        double wr = 1.0;
        if (nr > 0) {
          const std::vector<int> rt = rc.decode(ri);
          wr = right_tail_weight(ctx, out.hi(), f.hi(), rt, right_anchor);
          for (int k = 0; k < nr; ++k)
            full[static_cast<size_t>(oc.width + nl + k)] = rt[static_cast<size_t>(k)];
        }
        acc += wl * wr * f.table[fc.encode(full)];
      }
    }
    out.table[id] = undefined ? 0.0 : acc;
  }
  return out;
}

WindowObservable cond_expect_future(const WindowObservable& f, const ChainContext& ctx, Index c) {
  if (c <= f.lo()) return f;
  if (c > f.base) throw Error("cond_expect_future cut must not exceed the base index");
  // reuse cond_expect machinery with an asymmetric window: integrate left
  // coordinates below c, keep the whole right side.
  WindowObservable out;
  out.base = f.base;
  out.left = static_cast<int>(f.base - c);
  out.right = f.right;
  out.alphabet = f.alphabet;
  const TupleCodec oc = out.codec();
  const TupleCodec fc = f.codec();
  out.table.resize(oc.size());
  const int nl = static_cast<int>(c - f.lo());
  const TupleCodec lc{f.alphabet, nl};
  std::vector<int> full(static_cast<size_t>(f.width()));
  for (Index id = 0; id < oc.size(); ++id) {
    const std::vector<int> inner = oc.decode(id);
    for (int k = 0; k < oc.width; ++k) full[static_cast<size_t>(nl + k)] = inner[static_cast<size_t>(k)];
    double acc = 0.0;
    bool undefined = false;
    for (Index li = 0; li < lc.size(); ++li) {
      const std::vector<int> lt = lc.decode(li);
      const double wl = left_tail_weight(ctx, f.lo(), c, lt, inner.front());
      if (wl < 0.0) {
        undefined = true;
        break;
      }
      for (int k = 0; k < nl; ++k) full[static_cast<size_t>(k)] = lt[static_cast<size_t>(k)];
      acc += wl * f.table[fc.encode(full)];
    }
    out.table[id] = undefined ? 0.0 : acc;
  }
  return out;
}

NormReport norm(const WindowObservable& f, const ChainContext& ctx, double a, double b,
                double delta, SupConvention conv) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0,1)");
  NormReport rep;
  rep.a = a;
  rep.b = b;
  rep.delta = delta;
  rep.lp_norm = observable_lp(f, ctx, a, conv);
  const int rmax = std::max(f.left, f.right);
  double best = 0.0;
  int best_r = 0;
  double w = 1.0;  // delta^{-r}
  for (int r = 0; r < rmax; ++r, w /= delta) {
    const WindowObservable g = cond_expect(f, ctx, r);
    const WindowObservable diff = combine(1.0, f, -1.0, g, f.base);
    const double term = w * observable_lp(diff, ctx, b, conv);
    if (term > best) {
      best = term;
      best_r = r;
    }
  }
  rep.v_coeff = best;
  rep.attained_r = best_r;
  rep.total = rep.lp_norm + rep.v_coeff;
  return rep;
}

WindowObservable recenter_to_future(const WindowObservable& f, const ChainContext& ctx, double c,
                                    Index n_total) {
  if (!(c > 0.0) || n_total < 2) throw Error("recenter needs c > 0 and N >= 2");
  const Index m = static_cast<Index>(std::ceil(c * std::log(static_cast<double>(n_total))));
  if (m >= f.left) return f;
  if (f.base - m < 0) throw HorizonExceeded("recentering window exceeds horizon");
  return cond_expect_future(f, ctx, f.base - m);
}

double soft_clip(double x, double m) {
  const double ax = std::abs(x);
  if (ax <= m) return x;
  if (ax >= 2.0 * m) return 0.0;
  return (x > 0.0 ? 1.0 : -1.0) * (2.0 * m - ax);
}

WindowObservable truncate_soft(const WindowObservable& f, double m) {
  if (!(m > 0.0)) throw Error("truncation level must be positive");
  WindowObservable out = f;
  for (Index i = 0; i < out.table.size(); ++i) out.table[i] = soft_clip(f.table[i], m);
  return out;
}

HolderObservable holder_average_observable(const ChainContext& ctx, const HolderSpec& spec) {
  const int a = ctx.alphabet();
  if (spec.envelope.size() != a) throw Error("envelope must have one value per state");
  if (spec.envelope.minCoeff() <= 0.0) throw Error("envelope must be strictly positive");
  WindowObservable f;
  f.base = spec.base;
  f.left = spec.left;
  f.right = spec.right;
  f.alphabet = a;
  const TupleCodec c = f.codec();
  if (c.size() > 4096) throw Error("holder construction limited to 4096 table entries");

  // random per-coordinate profiles, geometrically damped away from the center
  SplitMix64 rng(spec.seed, 0x601de2);
  std::vector<Eigen::VectorXd> profile(static_cast<size_t>(f.width()));
  for (int k = 0; k < f.width(); ++k) {
    profile[static_cast<size_t>(k)].resize(a);
    for (int s = 0; s < a; ++s) profile[static_cast<size_t>(k)][s] = rng.next_double();
  }
  f.table.resize(c.size());
  for (Index id = 0; id < c.size(); ++id) {
    const auto t = c.decode(id);
    double v = 0.0;
    for (int k = 0; k < f.width(); ++k) {
      const double dist = std::abs(k - f.left);
      v += std::pow(2.0, -spec.alpha * dist) * profile[static_cast<size_t>(k)][t[static_cast<size_t>(k)]];
    }
    // envelope modulation through the center coordinate
    f.table[id] = v * spec.envelope[t[static_cast<size_t>(f.left)]];
  }

  // exhaustive scale-down so that |f(x)-f(y)| <= (C(x_j)+C(y_j)) rho^alpha
  double ratio = 0.0;
  for (Index i = 0; i < c.size(); ++i) {
    const auto ti = c.decode(i);
    for (Index j = i + 1; j < c.size(); ++j) {
      const auto tj = c.decode(j);
      double rho = 0.0;
      for (int k = 0; k < f.width(); ++k)
        if (ti[static_cast<size_t>(k)] != tj[static_cast<size_t>(k)])
          rho += std::pow(2.0, -std::abs(k - f.left));
      const double bound = (spec.envelope[ti[static_cast<size_t>(f.left)]] +
                            spec.envelope[tj[static_cast<size_t>(f.left)]]) *
                           std::pow(rho, spec.alpha);
      ratio = std::max(ratio, std::abs(f.table[i] - f.table[j]) / bound);
    }
  }
  HolderObservable out;
  if (ratio > 1.0) f.table /= ratio * (1.0 + 1e-12);
  out.f = std::move(f);
  out.delta = std::pow(2.0, -spec.alpha);
  out.achieved_ratio = std::min(ratio, 1.0);
  return out;
}

}  // namespace markovshift
