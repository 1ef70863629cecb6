#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tgfuse/ops.hpp"

using namespace tgfuse;
using tgtest::grad_error;
using tgtest::probe;
using tgtest::random_tensor;

namespace {

void check_close(const Tensor& got, std::initializer_list<double> want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  std::size_t i = 0;
  for (double w : want) CHECK(got[i++] == doctest::Approx(w).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor construction and views") {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  const Tensor r = t.reshape({3, 2});
  CHECK(r.at(2, 1) == 6.0);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), ShapeError);
}

TEST_CASE("matmul hand cases") {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  check_close(matmul(eye, b), {3, 4, 5, 6});
  check_close(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), {11});
  CHECK_THROWS_AS(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 2}})), ShapeError);
}

TEST_CASE("softmax hand cases and stability") {
  check_close(softmax(Tensor::row({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  check_close(softmax(Tensor::row({1000, 1000}), 0), {0.5, 0.5});
  const Tensor s = softmax(random_tensor({3, 5}, 1, -50, 50), 0);
  for (std::size_t c = 0; c < 5; ++c) {
    double col = 0.0;
    for (std::size_t r = 0; r < 3; ++r) col += s.at(r, c);
    CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(softmax(Tensor::row({1, 2}), 1), ShapeError);
}

TEST_CASE("layer_norm hand cases") {
  const Tensor one = Tensor::row({1, 1});
  const Tensor zero = Tensor::row({0, 0});
  check_close(layer_norm(Tensor::row({3, 3}), one, zero), {0, 0});
  const Tensor y = layer_norm(Tensor::row({1, 3}), one, zero, 1e-12);
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(layer_norm(Tensor::row({1, 3}), Tensor::row({1}), zero), ShapeError);
}

TEST_CASE("backward of simple sums") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor({3}, {1, 2, 3}));
  tape.backward(sum(mul(x, x)));
  const auto g = tape.grad(x);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 4.0);
  CHECK(g[2] == 6.0);

  Tape t2;
  const Tensor z = t2.leaf(random_tensor({2, 3, 2}, 5));
  t2.backward(sum(z));
  for (double v : t2.grad(z)) CHECK(v == 1.0);
}

TEST_CASE("tape contract errors") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  const Tensor loss = sum(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  CHECK_THROWS_AS(tape.leaf(x.detach()), ContractError);

  Tape other;
  const Tensor y = other.leaf(Tensor({2}, {1, 2}));
  Tape third;
  const Tensor w = third.leaf(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(add(y, w), ContractError);
}

TEST_CASE("constants stay untracked") {
  const Tensor a = random_tensor({2, 2}, 1);
  const Tensor c = matmul(a, a);
  CHECK_FALSE(c.tracked());
}

TEST_CASE("gradients match finite differences") {
  const Tensor a = random_tensor({3, 4}, 11);
  const Tensor b = random_tensor({4, 2}, 12);
  const Tensor same = random_tensor({3, 4}, 13);
  const Tensor bias = random_tensor({4}, 14);
  const double tol = 1e-6;

  SUBCASE("matmul") {
    CHECK(grad_error([&](const Tensor& x) { return probe(matmul(x, b)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(matmul(a, x)); }, b) < tol);
  }
  SUBCASE("elementwise") {
    CHECK(grad_error([&](const Tensor& x) { return probe(add(x, same)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(sub(same, x)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(mul(x, same)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(mul(x, x)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(scale(x, -2.5)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(transpose(x)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return mean(mul(x, x)); }, a) < tol);
  }
  SUBCASE("bias") {
    CHECK(grad_error([&](const Tensor& x) { return probe(add_bias(x, bias)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(add_bias(a, x)); }, bias) < tol);
  }
  SUBCASE("activations") {
    // Offsets keep every entry away from the ReLU kink.
    const Tensor away = random_tensor({3, 4}, 15, 0.1, 1.0);
    CHECK(grad_error([&](const Tensor& x) { return probe(relu(x)); }, away) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(relu(scale(x, -1.0))); }, away) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(gelu(x)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(sigmoid(x)); }, a) < tol);
  }
  SUBCASE("softmax and layer_norm") {
    CHECK(grad_error([&](const Tensor& x) { return probe(softmax(x, 1)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(softmax(x, 0)); }, a) < tol);
    const Tensor gain = random_tensor({4}, 16);
    CHECK(grad_error([&](const Tensor& x) { return probe(layer_norm(x, gain, bias)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(layer_norm(a, x, bias)); }, gain) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(layer_norm(a, gain, x)); }, bias) < tol);
  }
  SUBCASE("attention") {
    const Tensor q = random_tensor({3, 4}, 17), k = random_tensor({5, 4}, 18), v = random_tensor({5, 4}, 19);
    for (bool causal : {false, true}) {
      const Tensor kk = causal ? random_tensor({3, 4}, 20) : k;
      const Tensor vv = causal ? random_tensor({3, 4}, 21) : v;
      CHECK(grad_error([&](const Tensor& x) { return probe(scaled_dot_attention(x, kk, vv, 2, causal)); }, q) < tol);
      CHECK(grad_error([&](const Tensor& x) { return probe(scaled_dot_attention(q, x, vv, 2, causal)); }, kk) < tol);
      CHECK(grad_error([&](const Tensor& x) { return probe(scaled_dot_attention(q, kk, x, 2, causal)); }, vv) < tol);
    }
  }
  SUBCASE("row selection and layout") {
    std::vector<std::size_t> ids{2, 0, 2};
    CHECK(grad_error([&](const Tensor& x) { return probe(slice_rows(x, 1, 2)); }, a) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(gather_rows(x, ids)); }, a) < tol);
    const Tensor img = random_tensor({4, 4, 2}, 22);
    CHECK(grad_error([&](const Tensor& x) { return probe(patchify(x, 2)); }, img) < tol);
    const Tensor taps = random_tensor({4, 8}, 23);
    CHECK(grad_error([&](const Tensor& x) { return probe(depth_to_space(x, 2, 2)); }, taps) < tol);
    CHECK(grad_error([&](const Tensor& x) { return probe(x.reshape({4, 3})); }, a) < tol);
  }
}

TEST_CASE("attention hand case with identity projections") {
  const Tensor x = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor out = scaled_dot_attention(x, x, x, 1, false);
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double hi = e / (e + 1.0), lo = 1.0 / (e + 1.0);
  check_close(out, {hi, lo, lo, hi}, 1e-12);
}

TEST_CASE("attention properties") {
  const Tensor q = random_tensor({4, 6}, 1), k = random_tensor({4, 6}, 2), v = random_tensor({4, 6}, 3);

  SUBCASE("causal rows ignore later keys") {
    const Tensor base = scaled_dot_attention(q, k, v, 3, true);
    std::vector<double> kv = k.to_vector(), vv = v.to_vector();
    for (std::size_t c = 0; c < 6; ++c) {
      kv[3 * 6 + c] += 5.0;
      vv[3 * 6 + c] -= 7.0;
    }
    const Tensor moved = scaled_dot_attention(q, Tensor({4, 6}, kv), Tensor({4, 6}, vv), 3, true);
    for (std::size_t i = 0; i < 3 * 6; ++i) CHECK(moved[i] == base[i]);
    CHECK(tgtest::max_abs_diff(slice_rows(moved, 3, 1), slice_rows(base, 3, 1)) > 1e-3);
  }
  SUBCASE("single key returns its value") {
    const Tensor k1 = random_tensor({1, 6}, 4), v1 = random_tensor({1, 6}, 5);
    const Tensor out = scaled_dot_attention(q, k1, v1, 2, false);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(out.at(r, c) == doctest::Approx(v1[c]).epsilon(1e-14));
    }
  }
  SUBCASE("key order is irrelevant") {
    std::vector<std::size_t> perm{2, 0, 3, 1};
    const Tensor a = scaled_dot_attention(q, k, v, 2, false);
    const Tensor b = scaled_dot_attention(q, gather_rows(k, perm), gather_rows(v, perm), 2, false);
    CHECK(tgtest::max_abs_diff(a, b) < 1e-13);
  }
  SUBCASE("bad shapes") {
    CHECK_THROWS_AS(scaled_dot_attention(q, k, v, 4, false), ShapeError);
    CHECK_THROWS_AS(scaled_dot_attention(q, random_tensor({3, 6}, 6), random_tensor({3, 6}, 7), 2, true),
                    ShapeError);
  }
}

TEST_CASE("patchify and depth_to_space layout") {
  std::vector<double> px(16);
  for (std::size_t i = 0; i < 16; ++i) px[i] = static_cast<double>(i);
  const Tensor p = patchify(Tensor({4, 4, 1}, px), 2);
  REQUIRE(p.shape() == Shape{4, 4});
  check_close(slice_rows(p, 0, 1), {0, 1, 4, 5});
  check_close(slice_rows(p, 3, 1), {10, 11, 14, 15});
  CHECK(patchify(Tensor::zeros({4, 4, 1}), 4).rows() == 1);
  CHECK_THROWS_AS(patchify(Tensor::zeros({6, 6, 1}), 4), ConfigError);

  const Tensor d = depth_to_space(Tensor({1, 4}, {1, 2, 3, 4}), 1, 1);
  REQUIRE(d.shape() == Shape{4, 1});
  check_close(d, {1, 2, 3, 4});
}

TEST_CASE("injected backward faults are visible") {
  const Tensor a = random_tensor({3, 4}, 1), b = random_tensor({4, 2}, 2);
  auto f = [&](const Tensor& x) { return probe(matmul(x, b)); };
  debug::inject_backward_fault("matmul", 1.5);
  const double err = grad_error(f, a);
  debug::inject_backward_fault("", 1.0);
  CHECK(err > 0.3);
  CHECK(grad_error(f, a) < 1e-6);
}
