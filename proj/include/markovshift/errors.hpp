#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace markovshift {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroMarginal : Error {
  ZeroMarginal(std::int64_t index, int state)
      : Error("zero marginal probability at index " + std::to_string(index) +
              ", state " + std::to_string(state)),
        index(index),
        state(state) {}
  std::int64_t index;
  int state;
};

struct ZeroReference : Error {
  using Error::Error;
};

struct DegenerateBlock : Error {
  using Error::Error;
};

struct NotPrimitive : Error {
  using Error::Error;
};

struct HorizonExceeded : Error {
  using Error::Error;
};

struct BranchJump : Error {
  explicit BranchJump(double t)
      : Error("characteristic-function branch tracking failed near t = " +
              std::to_string(t)),
        t(t) {}
  double t;
};

struct NoConvergence : Error {
  using Error::Error;
};

struct UnstableStencil : Error {
  using Error::Error;
};

struct NotLattice : Error {
  using Error::Error;
};

struct SpanExceeded : Error {
  using Error::Error;
};

struct VarianceTooSmall : Error {
  using Error::Error;
};

struct TailUnresolved : Error {
  using Error::Error;
};

struct NonPositiveMatrix : Error {
  using Error::Error;
};

struct NoContraction : Error {
  using Error::Error;
};

struct GammaCNotLessThanOne : Error {
  using Error::Error;
};

struct SplitLost : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace markovshift
