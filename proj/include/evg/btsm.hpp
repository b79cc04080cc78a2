#pragma once

#include "evg/tensor.hpp"

namespace evg {

// Bins-Temporal Shift Module. Operates on feature tensors of shape
// (Bt, T, Bn, F) with F divisible by 4. Channels [0, F/4) are cyclically
// rolled by -1 along the chosen axis, channels [F/4, F/2) by +1, and the
// remaining half stays put. Entirely parameter-free.

/// One shift phase along axis d (1 = bins axis T, 2 = frames axis Bn).
TensorN channel_split_roll(const TensorN& x, int axis);

/// Intra-bin phase (d=2) followed by the inter-bin phase (d=1).
TensorN btsm_forward(const TensorN& x);

/// Transpose of the forward permutation: inverse rolls in reverse order,
/// so btsm_backward(btsm_forward(x)) == x exactly.
TensorN btsm_backward(const TensorN& dy);

}  // namespace evg
