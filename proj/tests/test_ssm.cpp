#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "evg/common.hpp"
#include "evg/grad_check.hpp"
#include "evg/kernels.hpp"
#include "evg/ssm.hpp"
#include "ref/reference.hpp"
#include "test_util.hpp"

using namespace evg;

namespace {

SsmParams random_params(std::size_t f, std::size_t s, Rng& rng) {
  SsmParams p = SsmParams::init(f, s, rng);
  for (double& v : p.a.value.data) v = uniform(rng, -2.5, -0.3);
  p.b_delta.value.data[0] = uniform(rng, -2.0, 0.5);
  for (double& v : p.skip.value.data) v = uniform(rng, -1.0, 1.0);
  return p;
}

double probe_loss(const TensorN& out, const TensorN& probe) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += probe.data[i] * out.data[i];
  return acc;
}

}  // namespace

TEST_CASE("discretize analytic examples") {
  Discretized d1 = discretize(-1.0, 1.0, std::log(2.0));
  CHECK(d1.a_bar == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d1.b_bar == doctest::Approx(0.5).epsilon(1e-12));

  Discretized d2 = discretize(-2.0, 3.0, 1.0);
  CHECK(d2.a_bar == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(d2.b_bar == doctest::Approx(3.0 * (1.0 - std::exp(-2.0)) / 2.0).epsilon(1e-12));

  // delta -> 0+: a_bar -> 1, b_bar -> 0; only the skip path remains.
  Discretized d3 = discretize(-1.5, 2.0, 1e-12);
  CHECK(d3.a_bar == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::fabs(d3.b_bar) < 1e-11);

  CHECK_THROWS_AS(discretize(-1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(discretize(-1.0, 1.0, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(discretize(0.5, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("scan core: hand-unrolled decaying impulse") {
  // a_bar = 0.5 and b_bar = 1 per step: a = ln(0.5) with delta = 1, and
  // b = -a / (1 - a_bar) * ... solved as b = 2 ln 2.
  const double a = std::log(0.5);
  const double b = 2.0 * std::log(2.0);
  TensorN x({3, 1}, {1.0, 0.0, 0.0});
  TensorN delta = TensorN::full({3}, 1.0);
  TensorN bs = TensorN::full({3, 1}, b);
  TensorN cs = TensorN::full({3, 1}, 1.0);
  TensorN as({1, 1}, {a});
  TensorN d({1}, {0.0});

  TensorN y = selective_scan_core(x, delta, bs, cs, as, d);
  CHECK(y.data[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.data[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.data[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("zero input gives zero output") {
  Rng rng = make_rng(41);
  SsmParams p = random_params(4, 3, rng);
  TensorN x({5, 4});
  TensorN y = selective_scan(x, p);
  CHECK(tensor_max_abs(y) == 0.0);
}

TEST_CASE("N=1 closed form: skip plus single-step readout") {
  Rng rng = make_rng(42);
  SsmParams p = random_params(3, 2, rng);
  TensorN x = test::random_tensor({1, 3}, rng);

  TensorN y = selective_scan(x, p);

  // Recompute the single step without any recurrence machinery.
  double d_pre = p.b_delta.value.data[0];
  for (std::size_t f = 0; f < 3; ++f) d_pre += p.w_delta.value.data[f] * x.data[f];
  const double delta = softplus(d_pre);
  for (std::size_t f = 0; f < 3; ++f) {
    double want = p.skip.value.data[f] * x.data[f];
    for (std::size_t s = 0; s < 2; ++s) {
      double b = 0.0, c = 0.0;
      for (std::size_t ff = 0; ff < 3; ++ff) {
        b += p.w_b.value.data[p.w_b.value.idx(s, ff)] * x.data[ff];
        c += p.w_c.value.data[p.w_c.value.idx(s, ff)] * x.data[ff];
      }
      const Discretized zoh = discretize(p.a.value.data[p.a.value.idx(f, s)], b, delta);
      want += c * zoh.b_bar * x.data[f];
    }
    CHECK(y.data[f] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("selective_scan equals the naive recurrence oracle") {
  Rng rng = make_rng(43);
  for (int it = 0; it < 20; ++it) {
    const std::size_t n = 1 + uniform_below(rng, 64);
    const std::size_t f = 1 + uniform_below(rng, 8);
    const std::size_t s = 1 + uniform_below(rng, 8);
    SsmParams p = random_params(f, s, rng);
    TensorN x = test::random_tensor({n, f}, rng);
    CHECK(test::max_abs_diff(selective_scan(x, p), ref::scan_naive(x, p)) <= 1e-12);
  }
}

TEST_CASE("stability: bounded inputs cannot blow up a 10000-step scan") {
  Rng rng = make_rng(44);
  SsmParams p = random_params(4, 4, rng);
  TensorN x = test::random_tensor({10000, 4}, rng);
  TensorN y = selective_scan(x, p);  // would throw numeric_error on overflow
  CHECK(std::isfinite(tensor_sum(y)));
  CHECK(tensor_max_abs(y) < 1e6);
}

TEST_CASE("density gating: the state coasts through inactive steps at default init") {
  Rng rng = make_rng(45);
  SsmParams p = SsmParams::init(8, 8, rng);
  // Zero input: delta = softplus(b_delta) = 1e-3.
  const double delta = softplus(p.b_delta.value.data[0]);
  CHECK(delta == doctest::Approx(1e-3).epsilon(1e-12));
  for (std::size_t f = 0; f < 8; ++f)
    for (std::size_t s = 0; s < 8; ++s) {
      const double a_bar = std::exp(delta * p.a.value.data[p.a.value.idx(f, s)]);
      CHECK(a_bar > 0.99);
      CHECK(a_bar < 1.0);
    }
}

TEST_CASE("scan backward matches finite differences") {
  Rng rng = make_rng(46);
  for (int seed = 0; seed < 10; ++seed) {
    const std::size_t n = 3 + uniform_below(rng, 5);
    const std::size_t f = 2 + uniform_below(rng, 3);
    const std::size_t s = 2 + uniform_below(rng, 3);
    SsmParams p = random_params(f, s, rng);
    TensorN x = test::random_tensor({n, f}, rng);
    TensorN probe = test::random_tensor({n, f}, rng);

    auto loss = [&] { return probe_loss(selective_scan(x, p), probe); };

    ScanCache cache;
    selective_scan(x, p, &cache);
    ScanGrads g = scan_backward(x, p, cache, probe);

    CHECK(grad_check(loss, x.data, g.dx.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.a.value.data, g.da.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.w_b.value.data, g.dw_b.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.w_c.value.data, g.dw_c.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.w_delta.value.data, g.dw_delta.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.b_delta.value.data, g.db_delta.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.skip.value.data, g.dskip.data, 1e-6, 1e-3).pass);
  }
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  Rng rng = make_rng(47);
  SsmParams p = random_params(3, 2, rng);
  TensorN x = test::random_tensor({6, 3}, rng);
  ScanCache cache;
  selective_scan(x, p, &cache);
  ScanGrads g = scan_backward(x, p, cache, TensorN({6, 3}));
  CHECK(tensor_max_abs(g.dx) == 0.0);
  CHECK(tensor_max_abs(g.da) == 0.0);
  CHECK(tensor_max_abs(g.dw_b) == 0.0);
  CHECK(tensor_max_abs(g.dw_c) == 0.0);
  CHECK(tensor_max_abs(g.dw_delta) == 0.0);
  CHECK(tensor_max_abs(g.db_delta) == 0.0);
  CHECK(tensor_max_abs(g.dskip) == 0.0);
}

TEST_CASE("ssm_block with zeroed projections is the identity") {
  Rng rng = make_rng(48);
  SsmParams p = SsmParams::init(8, 4, rng);
  p.w_b.value.fill(0.0);
  p.w_c.value.fill(0.0);
  p.w_delta.value.fill(0.0);
  p.skip.value.fill(0.0);
  RmsNormParams norm = RmsNormParams::init(8);

  TensorN x = test::random_tensor({2, 2, 3, 8}, rng);
  TensorN out = ssm_block(x, p, norm);
  CHECK(test::bitwise_equal(out, x));
}

TEST_CASE("ssm_block preserves shape") {
  Rng rng = make_rng(49);
  SsmParams p = random_params(8, 4, rng);
  RmsNormParams norm = RmsNormParams::init(8);
  TensorN x = test::random_tensor({2, 2, 3, 8}, rng);
  CHECK(ssm_block(x, p, norm).shape == x.shape);
}

TEST_CASE("ssm_block gradient check on (1,1,4,2)") {
  Rng rng = make_rng(50);
  for (int seed = 0; seed < 3; ++seed) {
    SsmParams p = random_params(2, 3, rng);
    RmsNormParams norm = RmsNormParams::init(2);
    for (double& v : norm.gain.value.data) v = uniform(rng, 0.5, 1.5);
    TensorN x = test::random_tensor({1, 1, 4, 2}, rng);
    TensorN probe = test::random_tensor({1, 1, 4, 2}, rng);

    auto loss = [&] { return probe_loss(ssm_block(x, p, norm), probe); };

    SsmBlockCache cache;
    ssm_block(x, p, norm, &cache);
    SsmBlockGrads g = ssm_block_backward(x, p, norm, cache, probe);

    CHECK(grad_check(loss, x.data, g.dx.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.a.value.data, g.params.da.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.w_b.value.data, g.params.dw_b.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.w_c.value.data, g.params.dw_c.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.w_delta.value.data, g.params.dw_delta.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.b_delta.value.data, g.params.db_delta.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, p.skip.value.data, g.params.dskip.data, 1e-6, 1e-3).pass);
    CHECK(grad_check(loss, norm.gain.value.data, g.dgain.data, 1e-6, 1e-3).pass);
  }
}

TEST_CASE("non-finite intermediates are reported with the step index") {
  Rng rng = make_rng(51);
  SsmParams p = random_params(2, 2, rng);
  p.skip.value.data[0] = std::numeric_limits<double>::infinity();
  TensorN x = TensorN::full({3, 2}, 1.0);
  CHECK_THROWS_WITH_AS(selective_scan(x, p), "selective_scan: non-finite value at step 0",
                       numeric_error);
}
