#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "evg/btsm.hpp"
#include "evg/common.hpp"
#include "evg/grad_check.hpp"
#include "ref/reference.hpp"
#include "test_util.hpp"

using namespace evg;

namespace {

TensorN distinct_tensor(std::vector<std::size_t> shape) {
  TensorN t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<double>(i + 1);
  return t;
}

std::multiset<double> group_values(const TensorN& x, std::size_t f_lo, std::size_t f_hi) {
  std::multiset<double> out;
  const std::size_t f = x.extent(3);
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (const std::size_t fi = i % f; fi >= f_lo && fi < f_hi) out.insert(x.data[i]);
  return out;
}

}  // namespace

TEST_CASE("worked (1,1,2,4) intra-bin example") {
  TensorN x({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  TensorN out = channel_split_roll(x, 2);
  CHECK(out.data == std::vector<double>{5, 6, 3, 4, 1, 2, 7, 8});
}

TEST_CASE("roll along a length-1 axis is the identity") {
  Rng rng = make_rng(31);
  TensorN x = test::random_tensor({2, 1, 3, 8}, rng);
  CHECK(test::bitwise_equal(channel_split_roll(x, 1), x));
  TensorN y = test::random_tensor({2, 3, 1, 8}, rng);
  CHECK(test::bitwise_equal(channel_split_roll(y, 2), y));
}

TEST_CASE("constant tensors are unchanged") {
  TensorN x = TensorN::full({2, 3, 4, 8}, 3.14);
  CHECK(test::bitwise_equal(btsm_forward(x), x));
}

TEST_CASE("shape and axis validation") {
  TensorN bad_f({1, 2, 2, 6});
  CHECK_THROWS_AS(channel_split_roll(bad_f, 2), std::invalid_argument);
  TensorN ok({1, 2, 2, 4});
  CHECK_THROWS_AS(channel_split_roll(ok, 0), std::invalid_argument);
  CHECK_THROWS_AS(channel_split_roll(ok, 3), std::invalid_argument);
}

TEST_CASE("composition of the two phases matches the permutation oracle") {
  TensorN x = distinct_tensor({1, 2, 2, 4});
  CHECK(test::bitwise_equal(btsm_forward(x), ref::btsm_oracle(x)));

  Rng rng = make_rng(32);
  for (int it = 0; it < 50; ++it) {
    TensorN r = test::random_tensor({1 + uniform_below(rng, 3), 1 + uniform_below(rng, 4),
                                     1 + uniform_below(rng, 4), 8},
                                    rng);
    CHECK(test::bitwise_equal(btsm_forward(r), ref::btsm_oracle(r)));
  }
}

TEST_CASE("T=1 and Bn=1 is the identity") {
  Rng rng = make_rng(33);
  TensorN x = test::random_tensor({3, 1, 1, 8}, rng);
  CHECK(test::bitwise_equal(btsm_forward(x), x));
}

TEST_CASE("backward inverts forward exactly") {
  Rng rng = make_rng(34);
  for (int it = 0; it < 20; ++it) {
    TensorN x = test::random_tensor({2, 3, 4, 8}, rng);
    CHECK(test::bitwise_equal(btsm_backward(btsm_forward(x)), x));
    CHECK(test::bitwise_equal(btsm_forward(btsm_backward(x)), x));
  }
}

TEST_CASE("constant gradient passes through unchanged") {
  TensorN g = TensorN::full({2, 2, 3, 4}, 0.5);
  CHECK(test::bitwise_equal(btsm_backward(g), g));
}

TEST_CASE("btsm gradient matches finite differences to 1e-10") {
  Rng rng = make_rng(35);
  for (int seed = 0; seed < 10; ++seed) {
    TensorN x = test::random_tensor({1, 2, 3, 4}, rng);
    TensorN probe = test::random_tensor({1, 2, 3, 4}, rng);
    auto loss = [&] {
      TensorN out = btsm_forward(x);
      double acc = 0.0;
      for (std::size_t i = 0; i < out.numel(); ++i) acc += probe.data[i] * out.data[i];
      return acc;
    };
    TensorN analytic = btsm_backward(probe);
    CHECK(grad_check(loss, x.data, analytic.data, 1e-6, 1e-10).pass);
  }
}

TEST_CASE("channel-group multisets are preserved; static half bitwise unchanged") {
  Rng rng = make_rng(36);
  for (int it = 0; it < 20; ++it) {
    TensorN x = test::random_tensor({2, 3, 4, 8}, rng);
    TensorN out = btsm_forward(x);
    const std::size_t f = 8;
    CHECK(group_values(x, 0, f / 4) == group_values(out, 0, f / 4));
    CHECK(group_values(x, f / 4, f / 2) == group_values(out, f / 4, f / 2));
    for (std::size_t i = 0; i < x.numel(); ++i)
      if (i % f >= f / 2) CHECK(out.data[i] == x.data[i]);

    CHECK(tensor_sum(out) == doctest::Approx(tensor_sum(x)).epsilon(1e-15));
    CHECK(*std::max_element(out.data.begin(), out.data.end()) ==
          *std::max_element(x.data.begin(), x.data.end()));
    CHECK(*std::min_element(out.data.begin(), out.data.end()) ==
          *std::min_element(x.data.begin(), x.data.end()));
  }
}

TEST_CASE("rolling a shifted group extent(d) times returns the original values") {
  Rng rng = make_rng(37);
  TensorN x = test::random_tensor({1, 3, 5, 8}, rng);
  TensorN cur = x;
  for (std::size_t i = 0; i < x.extent(2); ++i) cur = channel_split_roll(cur, 2);
  CHECK(test::bitwise_equal(cur, x));
  cur = x;
  for (std::size_t i = 0; i < x.extent(1); ++i) cur = channel_split_roll(cur, 1);
  CHECK(test::bitwise_equal(cur, x));
}

TEST_CASE("forward applies the intra-bin phase first") {
  // Each channel group shifts along orthogonal axes, so the two phase orders
  // actually commute; the composed permutation is well-defined either way.
  // Pin the implementation to the stated order and record the commutation.
  TensorN x = distinct_tensor({1, 2, 2, 4});
  TensorN intra_first = channel_split_roll(channel_split_roll(x, 2), 1);
  TensorN inter_first = channel_split_roll(channel_split_roll(x, 1), 2);
  CHECK(test::bitwise_equal(btsm_forward(x), intra_first));
  CHECK(test::bitwise_equal(intra_first, inter_first));

  Rng rng = make_rng(38);
  TensorN r = test::random_tensor({2, 3, 4, 8}, rng);
  CHECK(test::bitwise_equal(channel_split_roll(channel_split_roll(r, 2), 1),
                            channel_split_roll(channel_split_roll(r, 1), 2)));
}
