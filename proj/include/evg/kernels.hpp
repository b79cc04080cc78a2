#pragma once

#include <cstddef>

#include "evg/tensor.hpp"

namespace evg {

// Every kernel below has an analytic backward verified against central
// finite differences (see grad_check.hpp and the test suite).

/// Depthwise separable "asymmetric" convolution: per channel, a 1xk
/// horizontal pass followed by a kx1 vertical pass, same zero padding.
/// x: (C,H,W); weights_h, weights_v: (C,k) with k odd. Output (C,H,W).
TensorN conv_depthwise_asym(const TensorN& x, const TensorN& weights_h,
                            const TensorN& weights_v);

struct ConvAsymGrads {
  TensorN dx, dweights_h, dweights_v;
};
ConvAsymGrads conv_depthwise_asym_backward(const TensorN& x, const TensorN& weights_h,
                                           const TensorN& weights_v, const TensorN& dy);

/// Per-pixel linear map across channels. x: (Cin,H,W); w: (Cout,Cin);
/// b: (Cout). Output (Cout,H,W).
TensorN conv_pointwise(const TensorN& x, const TensorN& w, const TensorN& b);

struct ConvPointwiseGrads {
  TensorN dx, dw, db;
};
ConvPointwiseGrads conv_pointwise_backward(const TensorN& x, const TensorN& w,
                                           const TensorN& dy);

TensorN relu(const TensorN& x);
TensorN relu_backward(const TensorN& x, const TensorN& dy);

TensorN silu(const TensorN& x);
TensorN silu_backward(const TensorN& x, const TensorN& dy);

/// 2x2 max pooling with stride 2; H and W must be even. Ties resolve to the
/// first cell in scan order, in forward and backward alike.
TensorN maxpool2x2(const TensorN& x);
TensorN maxpool2x2_backward(const TensorN& x, const TensorN& dy);

/// (C,H,W) -> (C), mean over the spatial plane.
TensorN global_avg_pool(const TensorN& x);
TensorN global_avg_pool_backward(const TensorN& x, const TensorN& dy);

/// x: (F), w: (C,F), b: (C) -> (C).
TensorN linear(const TensorN& x, const TensorN& w, const TensorN& b);

struct LinearGrads {
  TensorN dx, dw, db;
};
LinearGrads linear_backward(const TensorN& x, const TensorN& w, const TensorN& dy);

/// Numerically stabilized by max subtraction; output sums to 1.
TensorN softmax(const TensorN& logits);
TensorN softmax_backward(const TensorN& probs, const TensorN& dy);

struct CrossEntropyResult {
  double loss = 0.0;
  bool clamped = false;  // true when the true-class probability hit the 1e-12 floor
};

/// L = -sum_c y_c log p_c for a one-hot label. Checks that probs lies on the
/// simplex (sum within 1e-6).
CrossEntropyResult cross_entropy(const TensorN& probs, std::size_t label);

/// dL/dp for the plain cross entropy above.
TensorN cross_entropy_backward(const TensorN& probs, std::size_t label);

/// Combined softmax + cross-entropy gradient w.r.t. the logits: p - y.
TensorN softmax_cross_entropy_backward(const TensorN& probs, std::size_t label);

double sigmoid(double x);
double softplus(double x);

}  // namespace evg
