#include <cmath>

#include <doctest.h>

#include "gradcheck.hpp"
#include "ugmcs/autodiff.hpp"
#include "ugmcs/errors.hpp"
#include "ugmcs/filters.hpp"
#include "ugmcs/rng.hpp"

using namespace ugmcs;
using ad::Tape;
using ad::Value;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * rng.normal(0.0, 1.0);
  return t;
}

} // namespace

TEST_CASE("elementwise op values") {
  Tape tape;
  Tensor a({2, 2, 2});
  a.data = {1, -2, 3, -4, 5, -6, 7, -8};
  Value va = tape.leaf(a, false);
  Value r = tape.relu(va);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(r->value.data[i] == std::max(0.0, a.data[i]));
  Value s = tape.sigmoid(va);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(s->value.data[i] == doctest::Approx(1.0 / (1.0 + std::exp(-a.data[i]))));
}

TEST_CASE("gradients: add/sub/mul/scale/relu/sigmoid chain") {
  Rng rng(31);
  const std::vector<Tensor> inputs = {random_tensor(rng, {2, 3, 3}),
                                      random_tensor(rng, {2, 3, 3})};
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    Value x = t.add(in[0], in[1]);
    Value y = t.mul(t.sigmoid(x), t.scale(t.sub(in[0], in[1]), 0.7));
    // offset relu input away from 0 so probes don't cross the kink
    Value z = t.relu(t.add(y, t.scale(in[0], 2.0)));
    return t.bce_mean(t.sigmoid(z), Tensor({2, 3, 3}, 1.0), 1e-7);
  };
  const auto res = gradcheck::check(inputs, fn, rng, 10);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gradients: conv2d (pad 0 and pad 1)") {
  Rng rng(32);
  for (int pad : {0, 1}) {
    const std::vector<Tensor> inputs = {
        random_tensor(rng, {2, 5, 5}),        // x
        random_tensor(rng, {3, 2, 3, 3}, 0.5), // w
        random_tensor(rng, {3}, 0.2),          // b
    };
    auto fn = [&, pad](Tape& t, std::vector<Value>& in) {
      Value y = t.conv2d(in[0], in[1], in[2], pad);
      return t.bce_mean(t.sigmoid(y), Tensor(y->value.shape, 0.0), 1e-7);
    };
    const auto res = gradcheck::check(inputs, fn, rng, 12);
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("conv2d shape checks") {
  Tape tape;
  Value x = tape.constant(Tensor({2, 4, 4}));
  Value w = tape.constant(Tensor({3, 2, 3, 3}));
  Value b = tape.constant(Tensor({3}));
  Value y = tape.conv2d(x, w, b, 1);
  CHECK(y->value.shape == std::vector<int>{3, 4, 4});
  Value w_bad = tape.constant(Tensor({3, 5, 3, 3}));
  CHECK_THROWS_AS(tape.conv2d(x, w_bad, b, 1), invalid_input);
}

TEST_CASE("gradients: instance_norm") {
  Rng rng(33);
  const std::vector<Tensor> inputs = {random_tensor(rng, {3, 4, 4}),
                                      random_tensor(rng, {3}, 0.5),
                                      random_tensor(rng, {3}, 0.5)};
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    Value y = t.instance_norm(in[0], in[1], in[2]);
    return t.bce_mean(t.sigmoid(y), Tensor(y->value.shape, 1.0), 1e-7);
  };
  const auto res = gradcheck::check(inputs, fn, rng, 16);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gradients: maxpool + upsample + concat") {
  Rng rng(34);
  const std::vector<Tensor> inputs = {random_tensor(rng, {2, 4, 4}),
                                      random_tensor(rng, {2, 2, 2})};
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    Value p = t.maxpool2(in[0]);                 // {2,2,2}
    Value u = t.upsample2_nearest(in[1]);        // {2,4,4}
    Value c = t.concat_channels({t.upsample2_nearest(p), u}); // {4,4,4}
    return t.bce_mean(t.sigmoid(c), Tensor(c->value.shape, 0.0), 1e-7);
  };
  const auto res = gradcheck::check(inputs, fn, rng, 12);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("maxpool values and odd-size rejection") {
  Tape tape;
  Tensor x({1, 2, 2});
  x.data = {1, 5, 3, 2};
  Value y = tape.maxpool2(tape.constant(x));
  CHECK(y->value.data[0] == 5);
  CHECK_THROWS_AS(tape.maxpool2(tape.constant(Tensor({1, 3, 3}))), invalid_input);
}

TEST_CASE("gradients: spatial attention") {
  Rng rng(35);
  const std::vector<Tensor> inputs = {random_tensor(rng, {2, 3, 3}, 0.7),
                                      random_tensor(rng, {2, 3, 3}, 0.7),
                                      random_tensor(rng, {3, 3, 3}, 0.7)};
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    Value y = t.spatial_attention(in[0], in[1], in[2]);
    return t.bce_mean(t.sigmoid(y), Tensor(y->value.shape, 1.0), 1e-7);
  };
  const auto res = gradcheck::check(inputs, fn, rng, 20);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("attention rows sum to one") {
  Rng rng(36);
  const Tensor q = random_tensor(rng, {4, 4, 4});
  const Tensor k = random_tensor(rng, {4, 4, 4});
  const Tensor a = ad::attention_rows(q, k);
  const int n = a.dim(0);
  REQUIRE(n == 16);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = a.data[static_cast<std::size_t>(i) * n + j];
      CHECK(v >= 0.0);
      row += v;
    }
    CHECK(std::fabs(row - 1.0) < 1e-6);
  }
}

TEST_CASE("gradients: fixed depthwise conv (gabor kernel)") {
  Rng rng(37);
  const GaborConfig gc;
  const Tensor kernel = gabor_mean_kernel(gc);
  const std::vector<Tensor> inputs = {random_tensor(rng, {2, 6, 6})};
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    Value y = t.fixed_depthwise_conv(in[0], kernel);
    return t.bce_mean(t.sigmoid(y), Tensor(y->value.shape, 0.0), 1e-7);
  };
  const auto res = gradcheck::check(inputs, fn, rng, 16);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gradients: hard gate, cosine, scalar_mul, mul_spatial") {
  Rng rng(38);
  const std::vector<Tensor> inputs = {random_tensor(rng, {2, 3, 3}),
                                      random_tensor(rng, {2, 3, 3}),
                                      random_tensor(rng, {1, 3, 3})};
  std::vector<std::uint8_t> keep(18);
  for (auto& b : keep) b = rng.uniform01() < 0.6 ? 1 : 0;
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    Value g = t.hard_gate(in[0], keep);
    Value s = t.cosine_flat(g, in[1]);          // scalar
    Value scaled = t.scalar_mul(s, in[1]);      // broadcast scalar
    Value m = t.mul_spatial(scaled, in[2]);     // broadcast plane
    return t.bce_mean(t.sigmoid(m), Tensor(m->value.shape, 1.0), 1e-7);
  };
  const auto res = gradcheck::check(inputs, fn, rng, 16);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("cosine: identities and scale invariance") {
  Rng rng(39);
  Tape tape;
  const Tensor a = random_tensor(rng, {2, 3, 3});
  Value va = tape.constant(a);
  CHECK(tape.cosine_flat(va, va)->value.data[0] == doctest::Approx(1.0));
  CHECK(tape.cosine_flat(tape.scale(va, -1.0), va)->value.data[0] == doctest::Approx(-1.0));
  CHECK(tape.cosine_flat(tape.scale(va, 3.7), va)->value.data[0] == doctest::Approx(1.0));

  Value zero = tape.constant(Tensor({2, 3, 3}));
  CHECK(tape.cosine_flat(zero, va)->value.data[0] == 0.0);
}

TEST_CASE("bce_mean analytic values and gradient") {
  Tape tape;
  Tensor pred({1, 2, 2}, 0.5);
  Tensor target({1, 2, 2}, 1.0);
  Value loss = tape.bce_mean(tape.constant(pred), target, 1e-7);
  CHECK(loss->value.data[0] == doctest::Approx(std::log(2.0)));

  Rng rng(40);
  Tensor p = random_tensor(rng, {1, 3, 3}, 0.3);
  for (double& v : p.data) v = 0.2 + 0.6 * std::fabs(std::tanh(v)); // in (0,1)
  Tensor tgt({1, 3, 3});
  for (double& v : tgt.data) v = rng.uniform01() < 0.5 ? 0.0 : 1.0;
  auto fn = [&](Tape& t, std::vector<Value>& in) {
    return t.bce_mean(in[0], tgt, 1e-7);
  };
  const std::vector<Tensor> inputs = {p};
  const auto res = gradcheck::check(inputs, fn, rng, 9);
  CHECK(res.max_rel_err < 1e-5);

  CHECK_THROWS_AS(tape.bce_mean(tape.constant(p), Tensor({1, 3, 3}, 0.5), 1e-7),
                  invalid_input);
}

TEST_CASE("hard gate passes kept entries only") {
  Tape tape;
  Tensor x({1, 1, 4});
  x.data = {1, 2, 3, 4};
  Value y = tape.hard_gate(tape.constant(x), {1, 0, 1, 0});
  CHECK(y->value.data == std::vector<double>{1, 0, 3, 0});
}

TEST_CASE("affine_scalars combines weighted scalar terms") {
  Tape tape;
  Value a = tape.constant(Tensor({1}, 2.0));
  Value b = tape.constant(Tensor({1}, 1.0));
  Value c = tape.constant(Tensor({1}, 0.5));
  Value total = tape.affine_scalars({{0.5, a}, {0.5, b}, {1.0, c}});
  CHECK(total->value.data[0] == doctest::Approx(2.0));
}
