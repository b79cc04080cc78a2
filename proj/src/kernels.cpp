#include "evg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace evg {

namespace {

void check_conv_asym_args(const TensorN& x, const TensorN& wh, const TensorN& wv) {
  require_rank(x, 3, "conv_depthwise_asym");
  require_rank(wh, 2, "conv_depthwise_asym weights_h");
  require_rank(wv, 2, "conv_depthwise_asym weights_v");
  const std::size_t c = x.extent(0);
  if (wh.extent(0) != c || wv.extent(0) != c)
    throw std::invalid_argument("conv_depthwise_asym: channel count mismatch");
  if (wh.extent(1) != wv.extent(1))
    throw std::invalid_argument("conv_depthwise_asym: kernel size mismatch");
  if (wh.extent(1) % 2 == 0)
    throw std::invalid_argument("conv_depthwise_asym: kernel size must be odd");
}

// Horizontal 1xk pass with zero padding.
TensorN conv_h(const TensorN& x, const TensorN& wh) {
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t k = wh.extent(1);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  TensorN out({c, h, w});
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(h); ++i) {
      const double* row = x.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + i) * static_cast<std::ptrdiff_t>(w);
      const double* wrow = wh.data.data() + ci * static_cast<std::ptrdiff_t>(k);
      double* orow = out.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + i) * static_cast<std::ptrdiff_t>(w);
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(w); ++j) {
        double acc = 0.0;
        for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(k); ++d) {
          const std::ptrdiff_t jj = j + d - r;
          if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(w)) acc += wrow[d] * row[jj];
        }
        orow[j] = acc;
      }
    }
  return out;
}

// Vertical kx1 pass with zero padding.
TensorN conv_v(const TensorN& x, const TensorN& wv) {
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t k = wv.extent(1);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  TensorN out({c, h, w});
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(h); ++i) {
      const double* wcol = wv.data.data() + ci * static_cast<std::ptrdiff_t>(k);
      double* orow = out.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + i) * static_cast<std::ptrdiff_t>(w);
      for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(k); ++d) {
        const std::ptrdiff_t ii = i + d - r;
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
        const double* row = x.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + ii) * static_cast<std::ptrdiff_t>(w);
        const double wd = wcol[d];
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(w); ++j)
          orow[j] += wd * row[j];
      }
    }
  return out;
}

// Correlation adjoints of the two passes (kernel index mirrored).
TensorN conv_h_adjoint(const TensorN& g, const TensorN& wh) {
  const std::size_t c = g.extent(0), h = g.extent(1), w = g.extent(2);
  const std::size_t k = wh.extent(1);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  TensorN out({c, h, w});
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(h); ++i) {
      const double* row = g.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + i) * static_cast<std::ptrdiff_t>(w);
      const double* wrow = wh.data.data() + ci * static_cast<std::ptrdiff_t>(k);
      double* orow = out.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + i) * static_cast<std::ptrdiff_t>(w);
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(w); ++j) {
        double acc = 0.0;
        for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(k); ++d) {
          const std::ptrdiff_t jj = j - (d - r);
          if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(w)) acc += wrow[d] * row[jj];
        }
        orow[j] = acc;
      }
    }
  return out;
}

TensorN conv_v_adjoint(const TensorN& g, const TensorN& wv) {
  const std::size_t c = g.extent(0), h = g.extent(1), w = g.extent(2);
  const std::size_t k = wv.extent(1);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  TensorN out({c, h, w});
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(h); ++i) {
      const double* wcol = wv.data.data() + ci * static_cast<std::ptrdiff_t>(k);
      double* orow = out.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + i) * static_cast<std::ptrdiff_t>(w);
      for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(k); ++d) {
        const std::ptrdiff_t ii = i - (d - r);
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
        const double* row = g.data.data() + (ci * static_cast<std::ptrdiff_t>(h) + ii) * static_cast<std::ptrdiff_t>(w);
        const double wd = wcol[d];
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(w); ++j)
          orow[j] += wd * row[j];
      }
    }
  return out;
}

}  // namespace

TensorN conv_depthwise_asym(const TensorN& x, const TensorN& weights_h,
                            const TensorN& weights_v) {
  check_conv_asym_args(x, weights_h, weights_v);
  return conv_v(conv_h(x, weights_h), weights_v);
}

ConvAsymGrads conv_depthwise_asym_backward(const TensorN& x, const TensorN& weights_h,
                                           const TensorN& weights_v, const TensorN& dy) {
  check_conv_asym_args(x, weights_h, weights_v);
  require_same_shape(x, dy, "conv_depthwise_asym_backward");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t k = weights_h.extent(1);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);

  const TensorN mid = conv_h(x, weights_h);  // recomputed, cheaper than caching

  ConvAsymGrads g{TensorN({c, h, w}), TensorN({c, k}), TensorN({c, k})};

  // d/d(weights_v): correlate dy with the intermediate, per channel.
  const TensorN dmid = conv_v_adjoint(dy, weights_v);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci) {
    for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(k); ++d) {
      double accv = 0.0;
      double acch = 0.0;
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(h); ++i)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(w); ++j) {
          const std::ptrdiff_t ii = i + d - r;
          if (ii >= 0 && ii < static_cast<std::ptrdiff_t>(h))
            accv += dy.data[dy.idx(static_cast<std::size_t>(ci), static_cast<std::size_t>(i), static_cast<std::size_t>(j))] *
                    mid.data[mid.idx(static_cast<std::size_t>(ci), static_cast<std::size_t>(ii), static_cast<std::size_t>(j))];
          const std::ptrdiff_t jj = j + d - r;
          if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(w))
            acch += dmid.data[dmid.idx(static_cast<std::size_t>(ci), static_cast<std::size_t>(i), static_cast<std::size_t>(j))] *
                    x.data[x.idx(static_cast<std::size_t>(ci), static_cast<std::size_t>(i), static_cast<std::size_t>(jj))];
        }
      g.dweights_v.data[g.dweights_v.idx(static_cast<std::size_t>(ci), static_cast<std::size_t>(d))] = accv;
      g.dweights_h.data[g.dweights_h.idx(static_cast<std::size_t>(ci), static_cast<std::size_t>(d))] = acch;
    }
  }

  g.dx = conv_h_adjoint(dmid, weights_h);
  return g;
}

TensorN conv_pointwise(const TensorN& x, const TensorN& w, const TensorN& b) {
  require_rank(x, 3, "conv_pointwise");
  require_rank(w, 2, "conv_pointwise weights");
  require_rank(b, 1, "conv_pointwise bias");
  const std::size_t cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const std::size_t cout = w.extent(0);
  if (w.extent(1) != cin || b.extent(0) != cout)
    throw std::invalid_argument("conv_pointwise: shape mismatch");

  const std::size_t plane = h * wd;
  TensorN out({cout, h, wd});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(cout); ++o) {
    double* op = out.data.data() + static_cast<std::size_t>(o) * plane;
    const double bias = b.data[static_cast<std::size_t>(o)];
    for (std::size_t p = 0; p < plane; ++p) op[p] = bias;
    for (std::size_t i = 0; i < cin; ++i) {
      const double wf = w.data[w.idx(static_cast<std::size_t>(o), i)];
      const double* ip = x.data.data() + i * plane;
      for (std::size_t p = 0; p < plane; ++p) op[p] += wf * ip[p];
    }
  }
  return out;
}

ConvPointwiseGrads conv_pointwise_backward(const TensorN& x, const TensorN& w,
                                           const TensorN& dy) {
  require_rank(x, 3, "conv_pointwise_backward");
  const std::size_t cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const std::size_t cout = w.extent(0);
  if (dy.rank() != 3 || dy.extent(0) != cout || dy.extent(1) != h || dy.extent(2) != wd)
    throw std::invalid_argument("conv_pointwise_backward: gradient shape mismatch");

  const std::size_t plane = h * wd;
  ConvPointwiseGrads g{TensorN({cin, h, wd}), TensorN({cout, cin}), TensorN({cout})};

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(cout); ++o) {
    const double* gp = dy.data.data() + static_cast<std::size_t>(o) * plane;
    double db = 0.0;
    for (std::size_t p = 0; p < plane; ++p) db += gp[p];
    g.db.data[static_cast<std::size_t>(o)] = db;
    for (std::size_t i = 0; i < cin; ++i) {
      const double* ip = x.data.data() + i * plane;
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += gp[p] * ip[p];
      g.dw.data[g.dw.idx(static_cast<std::size_t>(o), i)] = acc;
    }
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cin); ++i) {
    double* xp = g.dx.data.data() + static_cast<std::size_t>(i) * plane;
    for (std::size_t o = 0; o < cout; ++o) {
      const double wf = w.data[w.idx(o, static_cast<std::size_t>(i))];
      const double* gp = dy.data.data() + o * plane;
      for (std::size_t p = 0; p < plane; ++p) xp[p] += wf * gp[p];
    }
  }
  return g;
}

TensorN relu(const TensorN& x) {
  TensorN out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return out;
}

TensorN relu_backward(const TensorN& x, const TensorN& dy) {
  require_same_shape(x, dy, "relu_backward");
  TensorN out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

TensorN silu(const TensorN& x) {
  TensorN out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] * sigmoid(x.data[i]);
  return out;
}

TensorN silu_backward(const TensorN& x, const TensorN& dy) {
  require_same_shape(x, dy, "silu_backward");
  TensorN out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double s = sigmoid(x.data[i]);
    out.data[i] = dy.data[i] * (s * (1.0 + x.data[i] * (1.0 - s)));
  }
  return out;
}

TensorN maxpool2x2(const TensorN& x) {
  require_rank(x, 3, "maxpool2x2");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("maxpool2x2: H and W must be even, got " +
                                shape_string(x.shape));
  TensorN out({c, h / 2, w / 2});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        const auto cc = static_cast<std::size_t>(ci);
        double m = x.data[x.idx(cc, 2 * i, 2 * j)];
        m = std::max(m, x.data[x.idx(cc, 2 * i, 2 * j + 1)]);
        m = std::max(m, x.data[x.idx(cc, 2 * i + 1, 2 * j)]);
        m = std::max(m, x.data[x.idx(cc, 2 * i + 1, 2 * j + 1)]);
        out.data[out.idx(cc, i, j)] = m;
      }
  return out;
}

TensorN maxpool2x2_backward(const TensorN& x, const TensorN& dy) {
  require_rank(x, 3, "maxpool2x2_backward");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (dy.rank() != 3 || dy.extent(0) != c || dy.extent(1) != h / 2 || dy.extent(2) != w / 2)
    throw std::invalid_argument("maxpool2x2_backward: gradient shape mismatch");
  TensorN out({c, h, w});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        const auto cc = static_cast<std::size_t>(ci);
        // First strict maximum in scan order gets the whole gradient.
        const std::size_t cand[4] = {x.idx(cc, 2 * i, 2 * j), x.idx(cc, 2 * i, 2 * j + 1),
                                     x.idx(cc, 2 * i + 1, 2 * j),
                                     x.idx(cc, 2 * i + 1, 2 * j + 1)};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q)
          if (x.data[cand[q]] > x.data[best]) best = cand[q];
        out.data[best] += dy.data[dy.idx(cc, i, j)];
      }
  return out;
}

TensorN global_avg_pool(const TensorN& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
  TensorN out({c});
  for (std::size_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const double* p = x.data.data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out.data[ci] = acc / static_cast<double>(plane);
  }
  return out;
}

TensorN global_avg_pool_backward(const TensorN& x, const TensorN& dy) {
  require_rank(x, 3, "global_avg_pool_backward");
  const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
  if (dy.rank() != 1 || dy.extent(0) != c)
    throw std::invalid_argument("global_avg_pool_backward: gradient shape mismatch");
  TensorN out(x.shape);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double g = dy.data[ci] / static_cast<double>(plane);
    double* p = out.data.data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = g;
  }
  return out;
}

TensorN linear(const TensorN& x, const TensorN& w, const TensorN& b) {
  require_rank(x, 1, "linear");
  require_rank(w, 2, "linear weights");
  const std::size_t f = x.extent(0), c = w.extent(0);
  if (w.extent(1) != f || b.rank() != 1 || b.extent(0) != c)
    throw std::invalid_argument("linear: shape mismatch");
  TensorN out({c});
  for (std::size_t o = 0; o < c; ++o) {
    double acc = b.data[o];
    const double* wr = w.data.data() + o * f;
    for (std::size_t i = 0; i < f; ++i) acc += wr[i] * x.data[i];
    out.data[o] = acc;
  }
  return out;
}

LinearGrads linear_backward(const TensorN& x, const TensorN& w, const TensorN& dy) {
  const std::size_t f = x.extent(0), c = w.extent(0);
  if (dy.rank() != 1 || dy.extent(0) != c)
    throw std::invalid_argument("linear_backward: gradient shape mismatch");
  LinearGrads g{TensorN({f}), TensorN({c, f}), TensorN({c})};
  for (std::size_t o = 0; o < c; ++o) {
    const double go = dy.data[o];
    g.db.data[o] = go;
    const double* wr = w.data.data() + o * f;
    double* dwr = g.dw.data.data() + o * f;
    for (std::size_t i = 0; i < f; ++i) {
      dwr[i] = go * x.data[i];
      g.dx.data[i] += go * wr[i];
    }
  }
  return g;
}

TensorN softmax(const TensorN& logits) {
  require_rank(logits, 1, "softmax");
  TensorN out(logits.shape);
  double m = logits.data[0];
  for (double v : logits.data) m = std::max(m, v);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    out.data[i] = std::exp(logits.data[i] - m);
    z += out.data[i];
  }
  for (double& v : out.data) v /= z;
  return out;
}

TensorN softmax_backward(const TensorN& probs, const TensorN& dy) {
  require_same_shape(probs, dy, "softmax_backward");
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.numel(); ++i) dot += probs.data[i] * dy.data[i];
  TensorN out(probs.shape);
  for (std::size_t i = 0; i < probs.numel(); ++i)
    out.data[i] = probs.data[i] * (dy.data[i] - dot);
  return out;
}

namespace {
constexpr double kProbFloor = 1e-12;

void check_simplex(const TensorN& probs, std::size_t label) {
  require_rank(probs, 1, "cross_entropy");
  if (label >= probs.extent(0))
    throw std::invalid_argument("cross_entropy: label out of range");
  double s = 0.0;
  for (double v : probs.data) s += v;
  if (std::fabs(s - 1.0) > 1e-6)
    throw std::invalid_argument("cross_entropy: probabilities sum to " + std::to_string(s));
}
}  // namespace

CrossEntropyResult cross_entropy(const TensorN& probs, std::size_t label) {
  check_simplex(probs, label);
  CrossEntropyResult r;
  double p = probs.data[label];
  if (p < kProbFloor) {
    p = kProbFloor;
    r.clamped = true;
  }
  r.loss = -std::log(p);
  return r;
}

TensorN cross_entropy_backward(const TensorN& probs, std::size_t label) {
  check_simplex(probs, label);
  TensorN out(probs.shape);
  out.data[label] = -1.0 / std::max(probs.data[label], kProbFloor);
  return out;
}

TensorN softmax_cross_entropy_backward(const TensorN& probs, std::size_t label) {
  require_rank(probs, 1, "softmax_cross_entropy_backward");
  if (label >= probs.extent(0))
    throw std::invalid_argument("softmax_cross_entropy_backward: label out of range");
  TensorN out = probs;
  out.data[label] -= 1.0;
  return out;
}

}  // namespace evg
