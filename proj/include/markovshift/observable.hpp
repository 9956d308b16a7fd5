#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "markovshift/chain.hpp"
#include "markovshift/indexing.hpp"

namespace markovshift {

/// Real function of the coordinates X_{base-left},...,X_{base+right}, stored
/// as a dense table in lexicographic order (leftmost coordinate most
/// significant).
struct WindowObservable {
  Index base = 0;
  int left = 0;
  int right = 0;
  int alphabet = 2;
  Eigen::VectorXd table;

  int width() const { return left + right + 1; }
  Index lo() const { return base - left; }
  Index hi() const { return base + right; }
  TupleCodec codec() const { return TupleCodec{alphabet, width()}; }

  static WindowObservable constant(Index base, int alphabet, double value) {
    WindowObservable f;
    f.base = base;
    f.alphabet = alphabet;
    f.table = Eigen::VectorXd::Constant(alphabet, value);
    return f;
  }

  /// Value on a path segment: path[k] is the state at index path_start + k.
  double on_path(const std::int32_t* path, Index path_start) const {
    const Index off = lo() - path_start;
    Index id = 0;
    for (int k = 0; k < width(); ++k) id = id * alphabet + path[off + k];
    return table[id];
  }
};

/// View f on a larger window [new_lo, new_hi]; values ignore the new coordinates.
WindowObservable embed(const WindowObservable& f, Index new_lo, Index new_hi);

/// Same observable re-based at new_base (the table and absolute window shift with it).
WindowObservable shift_base(const WindowObservable& f, Index new_base);

/// a*f + b*g on the union window, based at `base`.
WindowObservable combine(double a, const WindowObservable& f, double b,
                         const WindowObservable& g, Index base);

WindowObservable pointwise_map(const WindowObservable& f, double (*fn)(double));
WindowObservable pointwise_power(const WindowObservable& f, int k);

/// E[f | F_{base-r, base+r}] computed exactly from forward and backward kernels.
/// Zero-probability tuples get value 0.
WindowObservable cond_expect(const WindowObservable& f, const ChainContext& ctx, int r);

/// E[f | F_{c, infinity}]: the coordinates below c are integrated out.
WindowObservable cond_expect_future(const WindowObservable& f, const ChainContext& ctx, Index c);

enum class SupConvention { support_restricted, full_table };

struct NormReport {
  double a = 2.0, b = 2.0, delta = 0.5;
  double lp_norm = 0.0;
  double v_coeff = 0.0;
  double total = 0.0;
  int attained_r = 0;  // radius attaining the v supremum
};

NormReport norm(const WindowObservable& f, const ChainContext& ctx, double a, double b,
                double delta, SupConvention conv = SupConvention::support_restricted);

/// g_{j,(N)} = E[f | F_{j - ceil(c ln N), infinity}].
WindowObservable recenter_to_future(const WindowObservable& f, const ChainContext& ctx, double c,
                                    Index n_total);

/// Soft truncation G_M: identity on [-M, M], linear to zero on +-[M, 2M], zero outside.
double soft_clip(double x, double m);
WindowObservable truncate_soft(const WindowObservable& f, double m);

struct HolderSpec {
  Index base = 0;
  int left = 1, right = 1;
  double alpha = 1.0;
  Eigen::VectorXd envelope;  // C(x) per state of the center coordinate
  std::uint64_t seed = 1;
};

struct HolderObservable {
  WindowObservable f;
  double delta = 0.5;          // 2^{-alpha}
  double achieved_ratio = 0.0; // max |f(x)-f(y)| / ((C+C) rho^alpha) after scaling
};

HolderObservable holder_average_observable(const ChainContext& ctx, const HolderSpec& spec);

}  // namespace markovshift
