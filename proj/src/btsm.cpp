#include "evg/btsm.hpp"

#include <stdexcept>

namespace evg {

namespace {

// shift = -1 rolls left (out[i] = in[i+1]), shift = +1 rolls right.
// `invert` swaps the direction of both shifted channel groups.
TensorN split_roll(const TensorN& x, int axis, bool invert) {
  require_rank(x, 4, "channel_split_roll");
  if (axis != 1 && axis != 2)
    throw std::invalid_argument("channel_split_roll: axis must be 1 (T) or 2 (Bn)");
  const std::size_t f = x.extent(3);
  if (f % 4 != 0)
    throw std::invalid_argument("channel_split_roll: F must be divisible by 4, got " +
                                std::to_string(f));

  const std::size_t bt = x.extent(0), t = x.extent(1), bn = x.extent(2);
  const std::size_t q = f / 4;
  const std::size_t n = axis == 1 ? t : bn;
  const std::ptrdiff_t left = invert ? 1 : -1;   // group 0
  const std::ptrdiff_t right = invert ? -1 : 1;  // group 1

  TensorN out(x.shape);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(bt); ++bi)
    for (std::ptrdiff_t ti = 0; ti < static_cast<std::ptrdiff_t>(t); ++ti)
      for (std::size_t ni = 0; ni < bn; ++ni)
        for (std::size_t fi = 0; fi < f; ++fi) {
          const std::size_t b = static_cast<std::size_t>(bi);
          const std::size_t tt = static_cast<std::size_t>(ti);
          std::ptrdiff_t shift = 0;
          if (fi < q)
            shift = left;
          else if (fi < 2 * q)
            shift = right;
          std::size_t st = tt, sn = ni;
          if (shift != 0) {
            const std::size_t pos = axis == 1 ? tt : ni;
            // out[i] = in[i - shift mod n]
            const std::size_t src = static_cast<std::size_t>(
                (static_cast<std::ptrdiff_t>(pos + n) - shift) % static_cast<std::ptrdiff_t>(n));
            if (axis == 1)
              st = src;
            else
              sn = src;
          }
          out.data[out.idx(b, tt, ni, fi)] = x.data[x.idx(b, st, sn, fi)];
        }
  return out;
}

}  // namespace

TensorN channel_split_roll(const TensorN& x, int axis) { return split_roll(x, axis, false); }

TensorN btsm_forward(const TensorN& x) {
  return channel_split_roll(channel_split_roll(x, 2), 1);
}

TensorN btsm_backward(const TensorN& dy) {
  return split_roll(split_roll(dy, 1, true), 2, true);
}

}  // namespace evg
