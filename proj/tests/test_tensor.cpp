#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "semlink/checkpoint.hpp"
#include "semlink/gradcheck.hpp"
#include "semlink/ops.hpp"
#include "semlink/rng.hpp"
#include "semlink/tensor.hpp"

using namespace semlink;

TEST_CASE("rng: identical (seed, stream) reproduces, distinct streams differ") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool all_equal = true, any_diff_stream = false;
  for (int i = 0; i < 1000; ++i) {
    const double va = a.uniform();
    all_equal = all_equal && (va == b.uniform());
    any_diff_stream = any_diff_stream || (va != c.uniform());
  }
  CHECK(all_equal);
  CHECK(any_diff_stream);
}

TEST_CASE("rng: normal moments are sane") {
  RngStream rng(3, streams::kChannelNoise);
  double sum = 0.0, sumsq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sumsq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("matmul: identity and hand arithmetic") {
  auto i2 = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(i2, m);
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{1, 2, 3, 4});

  auto a = Tensor<double>::from({1, 2}, {1, 2});
  auto b = Tensor<double>::from({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0);

  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("matmul: gradient matches finite differences") {
  RngStream rng(5, 0);
  auto a = Tensor<double>::randn({5, 4}, rng, 1.0);
  auto b = Tensor<double>::randn({4, 3}, rng, 1.0);
  auto report = grad_check(
      [](std::vector<Tensor<double>>& in) {
        auto y = matmul(in[0], in[1]);
        return mse_loss(y, Tensor<double>::zeros(y.shape()));
      },
      {a, b});
  CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("matmul: float backward tracks the double mirror") {
  RngStream rng(6, 0);
  auto a64 = Tensor<double>::randn({5, 4}, rng, 1.0, true);
  auto b64 = Tensor<double>::randn({4, 3}, rng, 1.0, true);
  std::vector<float> af(a64.data().begin(), a64.data().end());
  std::vector<float> bf(b64.data().begin(), b64.data().end());
  auto a32 = Tensor<float>::from({5, 4}, af, true);
  auto b32 = Tensor<float>::from({4, 3}, bf, true);

  mse_loss(matmul(a64, b64), Tensor<double>::zeros({5, 3})).backward();
  mse_loss(matmul(a32, b32), Tensor<float>::zeros({5, 3})).backward();
  CHECK(grad_rel_diff(a32.grad(), a64.grad()) < 1e-4);
  CHECK(grad_rel_diff(b32.grad(), b64.grad()) < 1e-4);
}

TEST_CASE("softmax: symmetry, stability, high-precision reference") {
  auto u = softmax(Tensor<double>::from({3}, {0, 0, 0}), -1);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto s = softmax(Tensor<double>::from({3}, {1000, 0, 0}), -1);
  CHECK(s.data()[0] == doctest::Approx(1.0));
  CHECK(s.data()[1] == 0.0);
  CHECK(std::isfinite(s.data()[0]));

  // 64-bit reference evaluation of softmax([1,2,3])
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double z = e1 + e2 + e3;
  auto f32 = softmax(Tensor<float>::from({3}, {1, 2, 3}), -1);
  CHECK(std::abs(f32.data()[0] - e1 / z) < 1e-6);
  CHECK(std::abs(f32.data()[1] - e2 / z) < 1e-6);
  CHECK(std::abs(f32.data()[2] - e3 / z) < 1e-6);
}

TEST_CASE("softmax: rows sum to one and gradient checks out") {
  RngStream rng(7, 0);
  auto x = Tensor<double>::randn({4, 6}, rng, 2.0);
  auto y = softmax(x, -1);
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 6; ++c) {
      const double v = y.data()[r * 6 + c];
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  auto w = Tensor<double>::randn({4, 6}, rng, 1.0);
  auto report = grad_check(
      [&](std::vector<Tensor<double>>& in) {
        return mse_loss(softmax(in[0], -1), Tensor<double>::zeros({4, 6}));
      },
      {x});
  CHECK(report.max_rel_err < 1e-7);

  // non-contiguous axis path
  auto report0 = grad_check(
      [](std::vector<Tensor<double>>& in) {
        return mse_loss(softmax(in[0], 0), Tensor<double>::zeros({4, 6}));
      },
      {w});
  CHECK(report0.max_rel_err < 1e-7);
}

TEST_CASE("layer_norm: constant input maps to bias, two-point standardization") {
  auto gain = Tensor<double>::from({4}, {1, 1, 1, 1});
  auto bias = Tensor<double>::zeros({4});
  auto y = layer_norm(Tensor<double>::full({4}, 3.5), gain, bias, 1e-5);
  for (double v : y.data()) CHECK(v == doctest::Approx(0.0));

  auto g2 = Tensor<double>::from({2}, {1, 1});
  auto b2 = Tensor<double>::zeros({2});
  auto y2 = layer_norm(Tensor<double>::from({2}, {1, 3}), g2, b2, 1e-12);
  CHECK(y2.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y2.data()[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm: gradient checks out") {
  RngStream rng(8, 0);
  auto x = Tensor<double>::randn({3, 5}, rng, 1.0);
  auto g = Tensor<double>::uniform({5}, rng, 0.5, 1.5);
  auto b = Tensor<double>::randn({5}, rng, 0.1);
  auto tgt = Tensor<double>::randn({3, 5}, rng, 1.0);
  auto report = grad_check(
      [&](std::vector<Tensor<double>>& in) {
        return mse_loss(layer_norm(in[0], in[1], in[2], 1e-5), tgt);
      },
      {x, g, b});
  CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("relu and sigmoid basics plus gradients") {
  auto r = relu(Tensor<double>::from({3}, {-1, 0, 2}));
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0, 0, 2});
  CHECK(sigmoid(Tensor<double>::scalar(0.0)).item() == 0.5);

  RngStream rng(9, 0);
  // keep relu inputs away from the kink where the derivative jumps
  auto x = Tensor<double>::from({6}, {-1.3, -0.4, 0.6, 1.7, -2.2, 0.9});
  auto tgt = Tensor<double>::randn({6}, rng, 1.0);
  auto rep1 = grad_check(
      [&](std::vector<Tensor<double>>& in) { return mse_loss(relu(in[0]), tgt); }, {x}, 1e-4);
  CHECK(rep1.max_rel_err < 1e-7);
  auto rep2 = grad_check(
      [&](std::vector<Tensor<double>>& in) { return mse_loss(sigmoid(in[0]), tgt); }, {x});
  CHECK(rep2.max_rel_err < 1e-7);
  auto rep3 = grad_check(
      [&](std::vector<Tensor<double>>& in) { return mse_loss(softplus(in[0]), tgt); }, {x});
  CHECK(rep3.max_rel_err < 1e-7);
}

TEST_CASE("mse_loss values and gradient formula") {
  auto p = Tensor<double>::from({2}, {0, 0});
  auto t = Tensor<double>::from({2}, {1, 3});
  CHECK(mse_loss(p, p).item() == 0.0);
  CHECK(mse_loss(p, t).item() == 5.0);
  CHECK_THROWS_AS(mse_loss(p, Tensor<double>::zeros({3})), std::invalid_argument);

  auto pr = Tensor<double>::from({2}, {0.5, -1.0}, true);
  auto loss = mse_loss(pr, t);
  loss.backward();
  // d/dp mean((p-t)^2) = 2(p-t)/N
  CHECK(pr.grad()[0] == doctest::Approx(2.0 * (0.5 - 1.0) / 2.0));
  CHECK(pr.grad()[1] == doctest::Approx(2.0 * (-1.0 - 3.0) / 2.0));
}

TEST_CASE("assorted ops: composite graph gradient") {
  RngStream rng(10, 0);
  auto a = Tensor<double>::randn({3, 4}, rng, 0.8);
  auto b = Tensor<double>::randn({3, 4}, rng, 0.8);
  auto bias = Tensor<double>::randn({4}, rng, 0.3);
  auto table = Tensor<double>::randn({3, 3}, rng, 0.5);

  auto report = grad_check(
      [](std::vector<Tensor<double>>& in) {
        auto s = add(mul(in[0], in[1]), scale(in[0], 0.25));
        s = add_row_bias(s, in[2]);
        s = reshape(transpose(s), {3, 4});
        auto t = concat_last(std::vector<Tensor<double>>{s, in[0]});
        auto p = rel_pos_gather(in[3], 2, 2);
        auto q = matmul(t, transpose(Tensor<double>::full({4, 8}, 0.1)));
        auto r = matmul(q, p);
        auto denom = add_const(softplus(sum_all(mul(r, r))), 1.0);
        return mul_scalar_t(sum_all(pow_scalar(add_const(mul(r, r), 0.3), 0.5)),
                            pow_scalar(denom, -0.5));
      },
      {a, b, bias, table});
  CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("grad_check: sum is exact and a wrong backward is caught") {
  RngStream rng(11, 0);
  auto x = Tensor<double>::randn({7}, rng, 1.0);
  auto rep = grad_check(
      [](std::vector<Tensor<double>>& in) { return sum_all(in[0]); }, {x});
  CHECK(rep.max_abs_err < 1e-10);

  // negative control: identity op whose backward deliberately scales by 0.5
  auto broken_identity = [](const Tensor<double>& t) {
    auto impl = t.impl_;
    std::vector<double> vals(t.data().begin(), t.data().end());
    return detail::make_node<double>(t.shape(), std::move(vals), {t},
                                     [impl](detail::TensorImpl<double>& self) {
                                       impl->ensure_grad();
                                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         impl->grad[i] += 0.5 * self.grad[i];
                                     });
  };
  auto bad = grad_check(
      [&](std::vector<Tensor<double>>& in) { return sum_all(broken_identity(in[0])); }, {x});
  CHECK(bad.max_rel_err > 1e-4);
}

TEST_CASE("grad_check rejects non-scalar outputs") {
  auto x = Tensor<double>::zeros({2});
  CHECK_THROWS_AS(grad_check([](std::vector<Tensor<double>>& in) { return in[0]; }, {x}),
                  std::invalid_argument);
}

TEST_CASE("adam: zero gradient leaves parameters, first step magnitude, descent") {
  auto w = Tensor<double>::from({2}, {1.0, -2.0}, true);
  std::vector<Tensor<double>> params = {w};
  AdamState<double> state;
  state.lr = 0.1;
  adam_step(params, state);
  CHECK(state.step_count == 1);
  CHECK(w.data()[0] == 1.0);
  CHECK(w.data()[1] == -2.0);

  // first step with g=1 moves by ~lr (bias-corrected m_hat/sqrt(v_hat) = 1)
  auto w1 = Tensor<double>::scalar(0.0, true);
  std::vector<Tensor<double>> p1 = {w1};
  AdamState<double> s1;
  s1.lr = 0.1;
  auto loss = mul_scalar_t(w1, Tensor<double>::scalar(1.0));
  loss.backward();
  adam_step(p1, s1);
  CHECK(std::abs(w1.item() + 0.1) < 1e-6);

  // three steps on f(w) = w^2 from w=1: strictly decreasing
  auto w2 = Tensor<double>::scalar(1.0, true);
  std::vector<Tensor<double>> p2 = {w2};
  AdamState<double> s2;
  s2.lr = 0.05;
  double prev = 1.0;
  for (int i = 0; i < 3; ++i) {
    w2.zero_grad();
    auto f = mul(w2, w2);
    f.backward();
    adam_step(p2, s2);
    CHECK(w2.item() < prev);
    prev = w2.item();
  }
  CHECK(s2.step_count == 3);
}

TEST_CASE("determinism: same seed gives bit-identical init and adam trajectory") {
  auto run = [] {
    RngStream rng(77, streams::kParamInit);
    auto w = Tensor<double>::randn({4, 4}, rng, 0.02, true);
    auto x = Tensor<double>::randn({4, 4}, rng, 1.0);
    std::vector<Tensor<double>> params = {w};
    AdamState<double> st;
    st.lr = 1e-2;
    for (int i = 0; i < 5; ++i) {
      w.zero_grad();
      mse_loss(matmul(x, w), Tensor<double>::full({4, 4}, 0.5)).backward();
      adam_step(params, st);
    }
    return std::vector<double>(w.data().begin(), w.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint: bit-exact round-trip") {
  RngStream rng(13, 0);
  std::vector<NamedTensorF32> tensors;
  tensors.push_back({"enc0.weight", {2, 3}, {0.1f, -2.5f, 3e-8f, 1e20f, -0.0f, 42.0f}});
  tensors.push_back({"enc0.bias", {3}, {1.0f, 2.0f, 3.0f}});
  std::vector<float> big(257);
  for (auto& v : big) v = static_cast<float>(rng.normal());
  tensors.push_back({"blk.attn.h0.wq", {257}, big});

  const std::string path = "ckpt_roundtrip_test.semw";
  write_checkpoint(path, tensors);
  auto back = read_checkpoint(path);
  REQUIRE(back.size() == tensors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK(back[i].shape == tensors[i].shape);
    REQUIRE(back[i].values.size() == tensors[i].values.size());
    for (std::size_t j = 0; j < back[i].values.size(); ++j) {
      // bit equality, including signed zero
      CHECK(std::memcmp(&back[i].values[j], &tensors[i].values[j], 4) == 0);
    }
  }
  std::remove(path.c_str());

  CHECK_THROWS(read_checkpoint("nonexistent_checkpoint.semw"));
}

TEST_CASE("backward requires scalar and tensors validate shapes") {
  auto x = Tensor<double>::zeros({2, 2}, true);
  CHECK_THROWS_AS(x.backward(), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<double>::from({2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(Tensor<double>::zeros({2, 2, 3}), Tensor<double>::zeros({3, 3, 4, 5}),
                         Tensor<double>(), 1),
                  std::invalid_argument);
}
