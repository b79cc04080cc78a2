#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "evg/common.hpp"
#include "evg/grad_check.hpp"
#include "evg/kernels.hpp"
#include "ref/reference.hpp"
#include "test_util.hpp"

using namespace evg;

namespace {

// Reduces a tensor output to a scalar with fixed random weights so backward
// passes can be exercised through grad_check.
struct Probe {
  TensorN weights;
  explicit Probe(const TensorN& like, Rng& rng) : weights(like.shape) {
    for (double& v : weights.data) v = uniform(rng, -1.0, 1.0);
  }
  double operator()(const TensorN& out) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += weights.data[i] * out.data[i];
    return acc;
  }
};

TensorN delta_kernel(std::size_t channels, std::size_t k) {
  TensorN w({channels, k});
  for (std::size_t c = 0; c < channels; ++c) w.data[w.idx(c, k / 2)] = 1.0;
  return w;
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(TensorN({2, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(TensorN(std::vector<std::size_t>{}), std::invalid_argument);
  CHECK_THROWS_AS(TensorN({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  TensorN t({2, 3});
  CHECK(t.numel() == 6);
}

TEST_CASE("delta kernels make conv_depthwise_asym the identity") {
  Rng rng = make_rng(1);
  for (int it = 0; it < 5; ++it) {
    TensorN x = test::random_tensor({3, 6, 7}, rng);
    TensorN out = conv_depthwise_asym(x, delta_kernel(3, 3), delta_kernel(3, 3));
    CHECK(test::bitwise_equal(out, x));
  }
}

TEST_CASE("constant input, all-ones horizontal, delta vertical -> interior 3c") {
  const double c = 1.7;
  TensorN x = TensorN::full({1, 5, 5}, c);
  TensorN ones({1, 3});
  ones.fill(1.0);
  TensorN out = conv_depthwise_asym(x, ones, delta_kernel(1, 3));
  CHECK(out.data[out.idx(0, 2, 2)] == doctest::Approx(3.0 * c));
  CHECK(out.data[out.idx(0, 2, 0)] == doctest::Approx(2.0 * c));  // border

  TensorN dense = ref::conv_depthwise_dense(x, ones, delta_kernel(1, 3));
  CHECK(test::max_abs_diff(out, dense) < 1e-12);
}

TEST_CASE("conv_depthwise_asym matches the dense composition oracle") {
  Rng rng = make_rng(2);
  for (int it = 0; it < 10; ++it) {
    TensorN x = test::random_tensor({2, 6, 5}, rng);
    TensorN wh = test::random_tensor({2, 3}, rng);
    TensorN wv = test::random_tensor({2, 3}, rng);
    CHECK(test::max_abs_diff(conv_depthwise_asym(x, wh, wv),
                             ref::conv_depthwise_dense(x, wh, wv)) < 1e-12);
  }
}

TEST_CASE("conv_depthwise_asym rejects even kernels and channel mismatches") {
  TensorN x({2, 4, 4});
  CHECK_THROWS_AS(conv_depthwise_asym(x, TensorN({2, 2}), TensorN({2, 2})),
                  std::invalid_argument);
  CHECK_THROWS_AS(conv_depthwise_asym(x, TensorN({3, 3}), TensorN({3, 3})),
                  std::invalid_argument);
}

TEST_CASE("conv_depthwise_asym gradients match finite differences") {
  Rng rng = make_rng(3);
  for (int seed = 0; seed < 20; ++seed) {
    TensorN x = test::random_tensor({1, 5, 5}, rng);
    TensorN wh = test::random_tensor({1, 3}, rng);
    TensorN wv = test::random_tensor({1, 3}, rng);
    Probe probe(x, rng);

    auto loss = [&] { return probe(conv_depthwise_asym(x, wh, wv)); };
    ConvAsymGrads g = conv_depthwise_asym_backward(x, wh, wv, probe.weights);

    CHECK(grad_check(loss, x.data, g.dx.data, 1e-5, 1e-4).pass);
    CHECK(grad_check(loss, wh.data, g.dweights_h.data, 1e-5, 1e-4).pass);
    CHECK(grad_check(loss, wv.data, g.dweights_v.data, 1e-5, 1e-4).pass);
  }
}

TEST_CASE("conv_pointwise identity and channel sum") {
  TensorN x({2, 3, 3});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = static_cast<double>(i);

  TensorN eye({2, 2});
  eye.data[eye.idx(0, 0)] = 1.0;
  eye.data[eye.idx(1, 1)] = 1.0;
  CHECK(test::bitwise_equal(conv_pointwise(x, eye, TensorN({2})), x));

  TensorN sum_w({1, 2});
  sum_w.fill(1.0);
  TensorN out = conv_pointwise(x, sum_w, TensorN({1}));
  for (std::size_t p = 0; p < 9; ++p)
    CHECK(out.data[p] == doctest::Approx(x.data[p] + x.data[9 + p]));
}

TEST_CASE("conv_pointwise gradients match finite differences") {
  Rng rng = make_rng(4);
  for (int seed = 0; seed < 20; ++seed) {
    TensorN x = test::random_tensor({3, 4, 4}, rng);
    TensorN w = test::random_tensor({2, 3}, rng);
    TensorN b = test::random_tensor({2}, rng);
    TensorN probe_shape({2, 4, 4});
    Probe probe(probe_shape, rng);

    auto loss = [&] { return probe(conv_pointwise(x, w, b)); };
    ConvPointwiseGrads g = conv_pointwise_backward(x, w, probe.weights);

    CHECK(grad_check(loss, x.data, g.dx.data, 1e-5, 1e-4).pass);
    CHECK(grad_check(loss, w.data, g.dw.data, 1e-5, 1e-4).pass);
    CHECK(grad_check(loss, b.data, g.db.data, 1e-5, 1e-4).pass);
  }
}

TEST_CASE("activation and pooling examples") {
  TensorN x({3}, {-1.0, 0.0, 2.0});
  TensorN r = relu(x);
  CHECK(r.data == std::vector<double>{0.0, 0.0, 2.0});

  TensorN logits = TensorN::full({4}, 3.25);
  TensorN p = softmax(logits);
  for (double v : p.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  TensorN plane({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(global_avg_pool(plane).data[0] == doctest::Approx(2.5));

  TensorN pooled = maxpool2x2(plane);
  CHECK(pooled.data[0] == 4.0);
  CHECK_THROWS_AS(maxpool2x2(TensorN({1, 3, 4})), std::invalid_argument);
}

TEST_CASE("softmax is a stable simplex map") {
  Rng rng = make_rng(5);
  for (int it = 0; it < 50; ++it) {
    TensorN logits = test::random_tensor({6}, rng, -30.0, 30.0);
    TensorN p = softmax(logits);
    double sum = tensor_sum(p);
    CHECK(std::fabs(sum - 1.0) < 1e-9);

    TensorN shifted = logits;
    for (double& v : shifted.data) v += 123.456;
    TensorN p2 = softmax(shifted);
    for (std::size_t i = 0; i < p.numel(); ++i)
      CHECK(std::fabs(p.data[i] - p2.data[i]) < 1e-9);

    std::size_t a1 = 0, a2 = 0;
    for (std::size_t i = 1; i < 6; ++i) {
      if (p.data[i] > p.data[a1]) a1 = i;
      if (p2.data[i] > p2.data[a2]) a2 = i;
    }
    CHECK(a1 == a2);
  }
}

TEST_CASE("elementwise and dense backward passes match finite differences") {
  Rng rng = make_rng(6);
  for (int seed = 0; seed < 20; ++seed) {
    TensorN x = test::random_tensor({4, 4}, rng);
    Probe probe(x, rng);

    auto loss_relu = [&] { return probe(relu(x)); };
    CHECK(grad_check(loss_relu, x.data, relu_backward(x, probe.weights).data, 1e-5, 1e-4)
              .pass);

    auto loss_silu = [&] { return probe(silu(x)); };
    CHECK(grad_check(loss_silu, x.data, silu_backward(x, probe.weights).data, 1e-5, 1e-4)
              .pass);

    TensorN plane = test::random_tensor({2, 4, 4}, rng);
    TensorN pooled_shape({2, 2, 2});
    Probe pool_probe(pooled_shape, rng);
    auto loss_pool = [&] { return pool_probe(maxpool2x2(plane)); };
    CHECK(grad_check(loss_pool, plane.data,
                     maxpool2x2_backward(plane, pool_probe.weights).data, 1e-6, 1e-4)
              .pass);

    TensorN gap_shape({2});
    Probe gap_probe(gap_shape, rng);
    auto loss_gap = [&] { return gap_probe(global_avg_pool(plane)); };
    CHECK(grad_check(loss_gap, plane.data,
                     global_avg_pool_backward(plane, gap_probe.weights).data, 1e-5, 1e-6)
              .pass);
  }
}

TEST_CASE("linear layer gradient is exact to 1e-6") {
  Rng rng = make_rng(7);
  TensorN x = test::random_tensor({4}, rng);
  TensorN w = test::random_tensor({4, 4}, rng);
  TensorN b = test::random_tensor({4}, rng);
  Probe probe(b, rng);

  auto loss = [&] { return probe(linear(x, w, b)); };
  LinearGrads g = linear_backward(x, w, probe.weights);
  CHECK(grad_check(loss, x.data, g.dx.data, 1e-5, 1e-6).pass);
  CHECK(grad_check(loss, w.data, g.dw.data, 1e-5, 1e-6).pass);
  CHECK(grad_check(loss, b.data, g.db.data, 1e-5, 1e-6).pass);
}

TEST_CASE("cross entropy identities") {
  for (std::size_t c : {2ul, 4ul, 38ul}) {
    TensorN p = TensorN::full({c}, 1.0 / static_cast<double>(c));
    CrossEntropyResult r = cross_entropy(p, c / 2);
    CHECK(std::fabs(r.loss - std::log(static_cast<double>(c))) < 1e-9);
    CHECK_FALSE(r.clamped);
  }

  TensorN sure({3}, {0.0, 1.0, 0.0});
  CHECK(cross_entropy(sure, 1).loss == 0.0);

  TensorN half({2}, {0.5, 0.5});
  CHECK(std::fabs(cross_entropy(half, 0).loss - std::log(2.0)) < 1e-9);

  TensorN zero({2}, {1.0, 0.0});
  CrossEntropyResult clamped = cross_entropy(zero, 1);
  CHECK(clamped.clamped);
  CHECK(clamped.loss == doctest::Approx(-std::log(1e-12)));

  TensorN not_simplex({2}, {0.9, 0.2});
  CHECK_THROWS_AS(cross_entropy(not_simplex, 0), std::invalid_argument);
}

TEST_CASE("combined softmax+CE logit gradient equals p - y via both routes") {
  Rng rng = make_rng(8);
  for (int it = 0; it < 20; ++it) {
    TensorN logits = test::random_tensor({5}, rng, -4.0, 4.0);
    const std::size_t label = uniform_below(rng, 5);
    TensorN p = softmax(logits);

    TensorN direct = softmax_cross_entropy_backward(p, label);
    // Independent route: dL/dp through the softmax Jacobian.
    TensorN via_chain = softmax_backward(p, cross_entropy_backward(p, label));
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::fabs(direct.data[i] - via_chain.data[i]) < 1e-9);
      const double want = p.data[i] - (i == label ? 1.0 : 0.0);
      CHECK(std::fabs(direct.data[i] - want) < 1e-12);
    }
  }
}

TEST_CASE("grad_check flags a corrupted backward pass") {
  Rng rng = make_rng(9);
  TensorN x = test::random_tensor({4}, rng);
  TensorN w = test::random_tensor({3, 4}, rng);
  TensorN b = test::random_tensor({3}, rng);
  Probe probe(b, rng);

  auto loss = [&] { return probe(linear(x, w, b)); };
  LinearGrads g = linear_backward(x, w, probe.weights);
  for (double& v : g.dx.data) v *= 2.0;  // deliberate corruption
  GradCheckReport r = grad_check(loss, x.data, g.dx.data, 1e-5, 1e-4);
  CHECK_FALSE(r.pass);
  CHECK(r.max_rel_err > 1e-4);
}
