#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tgfuse/decoder.hpp"
#include "tgfuse/losses.hpp"

using namespace tgfuse;
using tgtest::random_tensor;

namespace {

struct DecoderCase {
  std::size_t grid, dim, heads, hidden;
};

FusedFeatures random_fused(std::size_t grid, std::size_t dim, std::size_t text_len, std::uint64_t seed) {
  return {random_tensor({grid * grid, dim}, seed), random_tensor({text_len, dim}, seed + 1)};
}

Tensor binary_grid(std::size_t n, std::uint64_t seed, double density = 0.5) {
  Rng rng(seed);
  std::vector<double> v(n * n);
  for (auto& x : v) x = rng.uniform() < density ? 1.0 : 0.0;
  return Tensor({n, n}, std::move(v));
}

}  // namespace

TEST_CASE("decoder halves channels and doubles size at each stage") {
  const DecoderCase cases[] = {{8, 64, 4, 64}, {8, 32, 2, 32}, {4, 64, 4, 16}, {2, 16, 1, 8}, {6, 128, 8, 64}};
  for (const auto& c : cases) {
    CAPTURE(c.grid);
    CAPTURE(c.dim);
    Rng rng(1);
    const MaskDecoder dec({c.dim, c.heads, c.hidden, 0, nn::Activation::Relu}, rng);
    Context ctx;
    DecoderTrace trace;
    const Prediction p = decode(ctx, random_fused(c.grid, c.dim, 5, 3), dec, &trace);
    CHECK(trace.f1.shape() == Shape{2 * c.grid, 2 * c.grid, c.dim / 2});
    CHECK(trace.f2.shape() == Shape{4 * c.grid, 4 * c.grid, c.dim / 4});
    CHECK(trace.native_logits.shape() == Shape{4 * c.grid, 4 * c.grid});
    CHECK(p.mask_logits.shape() == Shape{4 * c.grid, 4 * c.grid});
    CHECK(p.bbox.shape() == Shape{4});
  }
}

TEST_CASE("decoder resizes to the requested output") {
  Rng rng(2);
  const MaskDecoder dec({16, 2, 8, 20, nn::Activation::Relu}, rng);
  Context ctx;
  const Prediction p = decode(ctx, random_fused(2, 16, 3, 4), dec);
  CHECK(p.mask_logits.shape() == Shape{20, 20});
  CHECK(p.mask_probs.shape() == Shape{20, 20});
}

TEST_CASE("decoder input validation") {
  Rng rng(3);
  const MaskDecoder dec({16, 2, 8, 0, nn::Activation::Relu}, rng);
  Context ctx;
  CHECK_THROWS_AS(decode(ctx, {random_tensor({5, 16}, 1), random_tensor({3, 16}, 2)}, dec), ConfigError);
  CHECK_THROWS_AS(decode(ctx, random_fused(2, 8, 3, 1), dec), ShapeError);
}

TEST_CASE("bilinear weights") {
  const Tensor same = bilinear_weights(4, 4);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(same.at(r, c) == (r == c ? 1.0 : 0.0));
  }
  const Tensor up = bilinear_weights(8, 3);
  for (std::size_t r = 0; r < 8; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(up.at(r, c) >= 0.0);
      row += up.at(r, c);
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-14));
  }
  // Constant logits stay constant after resizing.
  const Tensor flat = matmul(matmul(up, Tensor::filled({3, 3}, 2.5)), transpose(up));
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("zero hyper-weights give probability one half everywhere") {
  Rng rng(4);
  MaskDecoder dec({16, 2, 8, 0, nn::Activation::Relu}, rng);
  ParameterList params;
  dec.collect(params);
  for (Parameter* p : params) {
    if (p->name.rfind("decoder.mask_mlp.fc2", 0) == 0) p->value = Tensor::zeros(p->value.shape());
  }
  Context ctx;
  const Prediction p = decode(ctx, random_fused(2, 16, 3, 5), dec);
  for (std::size_t i = 0; i < p.mask_logits.size(); ++i) {
    CHECK(p.mask_logits[i] == 0.0);
    CHECK(p.mask_probs[i] == 0.5);
  }
}

TEST_CASE("boxes are canonical") {
  const Tensor b = canonical_box(Tensor({4}, {0.8, 0.1, 0.2, 0.6}));
  CHECK(b.to_vector() == std::vector<double>{0.2, 0.1, 0.8, 0.6});
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(s);
    const MaskDecoder dec({16, 2, 8, 0, nn::Activation::Relu}, rng);
    Context ctx;
    const Tensor box = decode(ctx, random_fused(2, 16, 3, s + 10), dec).bbox;
    CHECK(box[0] <= box[2]);
    CHECK(box[1] <= box[3]);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(box[i] >= 0.0);
      CHECK(box[i] <= 1.0);
    }
  }
  CHECK(tgtest::grad_error([](const Tensor& x) { return tgtest::probe(canonical_box(x)); },
                           Tensor({4}, {0.8, 0.1, 0.2, 0.6})) < 1e-8);
}

TEST_CASE("with a box weight every decoder parameter receives gradient") {
  Rng rng(5);
  MaskDecoder dec({16, 2, 8, 0, nn::Activation::Relu}, rng);
  ParameterList params;
  dec.collect(params);
  for (Parameter* p : params) p->zero_grad();
  const Tensor gt = binary_grid(8, 6);
  {
    Tape tape;
    Context ctx(tape);
    const FusedFeatures fused = random_fused(2, 16, 3, 7);
    const Prediction p = decode(ctx, fused, dec);
    tape.backward(total_loss(p, gt, Tensor({4}, {0.1, 0.2, 0.7, 0.9}), 1.0).total);
  }
  for (Parameter* p : params) {
    CAPTURE(p->name);
    double g = 0.0;
    for (double v : p->grad) g += std::abs(v);
    CHECK(g > 0.0);
  }
}

TEST_CASE("binarize") {
  CHECK(binarize(Tensor::filled({3, 3}, 0.5)).count() == 9);
  CHECK(binarize(Tensor::filled({3, 3}, 0.4999)).empty());
  const Tensor probs = random_tensor({6, 6}, 1, 0.0, 1.0);
  std::size_t last = 37;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const std::size_t n = binarize(probs, t).count();
    CHECK(n <= last);
    last = n;
  }
  CHECK_THROWS_AS(binarize(Tensor::filled({4}, 0.5)), ShapeError);
}

TEST_CASE("bce closed forms") {
  const Tensor g = binary_grid(4, 1);
  CHECK(bce_loss(Tensor::filled({4, 4}, 0.5), g).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(bce_loss(Tensor::filled({4, 4}, 0.5), g).item() - std::log(2.0)) < 1e-9);
  CHECK(bce_loss(Tensor::filled({10}, 0.9), Tensor::filled({10}, 1.0)).item() ==
        doctest::Approx(-std::log(0.9)).epsilon(1e-12));
  CHECK(bce_loss(g, g).item() == doctest::Approx(-std::log(1.0 - kBceClamp)).epsilon(1e-9));
  CHECK_THROWS_AS(bce_loss(Tensor::filled({4}, 0.5), Tensor::filled({4}, 0.3)), InputError);
  CHECK_THROWS_AS(bce_loss(Tensor::filled({4}, 0.5), Tensor::filled({5}, 1.0)), ShapeError);
}

TEST_CASE("bce over constant predictions is minimized at the target mean") {
  const Tensor g = binary_grid(8, 2, 0.3);
  double mean_g = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) mean_g += g[i];
  mean_g /= static_cast<double>(g.size());
  double best = 1e9, best_a = 0.0;
  for (int k = 1; k < 1000; ++k) {
    const double a = k / 1000.0;
    const double l = bce_loss(Tensor::filled({8, 8}, a), g).item();
    if (l < best) {
      best = l;
      best_a = a;
    }
  }
  CHECK(std::abs(best_a - mean_g) <= 1e-3);
}

TEST_CASE("dice closed forms") {
  const Tensor g = Tensor({4}, {1, 1, 0, 0});
  CHECK(dice_loss(Tensor::filled({4}, 0.5), g).item() == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
  const Tensor m = binary_grid(8, 3);
  CHECK(dice_loss(m, m).item() <= 2e-6);
  CHECK(dice_loss(Tensor({4}, {0, 0, 1, 1}), g).item() == doctest::Approx(1.0).epsilon(1e-5));
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const double l = dice_loss(random_tensor({5, 5}, s, 0.0, 1.0), binary_grid(5, s + 7)).item();
    CHECK(l >= 0.0);
    CHECK(l <= 1.0 + 1e-5);
  }
}

TEST_CASE("smooth l1") {
  const Tensor a({4}, {0.0, 0.0, 0.0, 0.0});
  CHECK(smooth_l1_loss(a, Tensor({4}, {0.5, 0.0, 0.0, 0.0})).item() == doctest::Approx(0.125 / 4.0));
  CHECK(smooth_l1_loss(a, Tensor({4}, {2.0, 0.0, 0.0, 0.0})).item() == doctest::Approx(1.5 / 4.0));
  CHECK(smooth_l1_loss(a, a).item() == 0.0);
}

TEST_CASE("loss gradients match finite differences") {
  const Tensor g = binary_grid(5, 4);
  const Tensor a = random_tensor({5, 5}, 5, 0.05, 0.95);
  CHECK(tgtest::grad_error([&](const Tensor& x) { return bce_loss(x, g); }, a) < 1e-6);
  CHECK(tgtest::grad_error([&](const Tensor& x) { return dice_loss(x, g); }, a) < 1e-6);
  const Tensor box = Tensor({4}, {0.3, -0.4, 2.0, 0.1});
  CHECK(tgtest::grad_error([&](const Tensor& x) { return smooth_l1_loss(x, Tensor::zeros({4})); }, box) < 1e-6);
  // Clamped entries carry no gradient.
  const auto clamped = tgtest::analytic_grad([&](const Tensor& x) { return bce_loss(x, g); }, Tensor::zeros({5, 5}));
  for (double v : clamped) CHECK(v == 0.0);
}

TEST_CASE("total loss is the plain sum without a box weight") {
  const Tensor g = binary_grid(6, 8);
  Prediction p;
  p.mask_probs = random_tensor({6, 6}, 9, 0.01, 0.99);
  p.bbox = Tensor({4}, {0.1, 0.2, 0.3, 0.4});
  const Tensor gt_box({4}, {0.5, 0.5, 0.9, 0.9});
  const LossBreakdown l = total_loss(p, g, gt_box, 0.0);
  CHECK(l.total.item() == l.bce.item() + l.dice.item());
  CHECK(l.bbox.item() == 0.0);
  p.bbox = Tensor({4}, {0.0, 0.0, 1.0, 1.0});
  CHECK(total_loss(p, g, gt_box, 0.0).total.item() == l.total.item());

  const LossBreakdown w = total_loss(p, g, gt_box, 2.0);
  CHECK(w.total.item() == doctest::Approx(w.bce.item() + w.dice.item() + 2.0 * w.bbox.item()).epsilon(1e-15));

  Prediction perfect;
  perfect.mask_probs = g;
  perfect.bbox = gt_box;
  CHECK(total_loss(perfect, g, gt_box).total.item() <= 2e-6);

  Prediction half;
  half.mask_probs = Tensor::filled({6, 6}, 0.5);
  half.bbox = gt_box;
  CHECK(total_loss(half, g, gt_box).total.item() ==
        doctest::Approx(std::log(2.0) + dice_loss(half.mask_probs, g).item()).epsilon(1e-12));
}
