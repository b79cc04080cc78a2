#pragma once

// Serial reference implementations used as independent oracles by the test
// and acceptance suites, and as the baseline side of the benchmark. They are
// deliberately written the slow, obvious way and share no code with the
// library kernels they check.

#include <cstdint>
#include <span>

#include "evg/event.hpp"
#include "evg/ssm.hpp"
#include "evg/tensor.hpp"

namespace evg::ref {

/// Per-pixel replay: scan the whole slice per (pixel, polarity) keeping the
/// max timestamp.
TensorN lnes_replay(std::span<const Event> events, std::uint64_t frame_start,
                    std::uint64_t frame_len, Geometry geometry);

/// Literal index permutation of the channel-split roll.
TensorN btsm_roll_oracle(const TensorN& x, int axis);
TensorN btsm_oracle(const TensorN& x);

/// Composes the separable pair into a dense k x k kernel per channel and
/// applies a direct 2-D convolution.
TensorN conv_depthwise_dense(const TensorN& x, const TensorN& weights_h,
                             const TensorN& weights_v);

/// Plain serial pointwise convolution (no pragmas), for the benchmark.
TensorN conv_pointwise_serial(const TensorN& x, const TensorN& w, const TensorN& b);

/// Step-by-step recurrence with scalar discretization via evg::discretize,
/// recomputed per (step, feature, state).
TensorN scan_naive(const TensorN& x, const SsmParams& p);

/// Same, with caller-provided coefficient sequences.
TensorN scan_core_naive(const TensorN& x, const TensorN& delta, const TensorN& b,
                        const TensorN& c, const TensorN& a, const TensorN& d);

}  // namespace evg::ref
