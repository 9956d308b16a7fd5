#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace markovshift {

using Index = std::int64_t;

/// Flat indexing for dense tables over tuples in {0..alphabet-1}^width.
/// The leftmost coordinate is the most significant digit, so tuples are
/// enumerated in lexicographic order.
struct TupleCodec {
  int alphabet = 2;
  int width = 1;

  Index size() const {
    Index s = 1;
    for (int k = 0; k < width; ++k) s *= alphabet;
    return s;
  }

  Index encode(const std::vector<int>& tuple) const {
    Index id = 0;
    for (int k = 0; k < width; ++k) id = id * alphabet + tuple[k];
    return id;
  }

  std::vector<int> decode(Index id) const {
    std::vector<int> tuple(width);
    for (int k = width - 1; k >= 0; --k) {
      tuple[k] = static_cast<int>(id % alphabet);
      id /= alphabet;
    }
    return tuple;
  }

  /// Coordinate k of the tuple encoded by id, without materializing the tuple.
  int coord(Index id, int k) const {
    for (int j = width - 1; j > k; --j) id /= alphabet;
    return static_cast<int>(id % alphabet);
  }
};

inline Index checked_table_size(int alphabet, int width, Index limit = Index(1) << 24) {
  Index s = 1;
  for (int k = 0; k < width; ++k) {
    s *= alphabet;
    if (s > limit) throw std::runtime_error("window table exceeds size limit");
  }
  return s;
}

}  // namespace markovshift
