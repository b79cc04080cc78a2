#pragma once

#include "evg/common.hpp"
#include "evg/tensor.hpp"

namespace evg::test {

inline TensorN random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  TensorN t(std::move(shape));
  for (double& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

inline bool bitwise_equal(const TensorN& a, const TensorN& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

inline double max_abs_diff(const TensorN& a, const TensorN& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace evg::test
