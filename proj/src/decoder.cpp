#include "tgfuse/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace tgfuse {

struct DecoderAccess {
  static Prediction decode(Context& ctx, const FusedFeatures& fused, const MaskDecoder& dec,
                           DecoderTrace* trace);
};

MaskDecoder::MaskDecoder(const MaskDecoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      up1_("decoder.up1", cfg.dim, rng),
      up2_("decoder.up2", cfg.dim / 2, rng),
      image_query_norm_("decoder.image_query_norm", cfg.dim),
      text_kv_norm_("decoder.text_kv_norm", cfg.dim),
      image_to_text_("decoder.image_to_text", cfg.dim, cfg.heads, rng),
      text_query_norm_("decoder.text_query_norm", cfg.dim),
      image_kv_norm_("decoder.image_kv_norm", cfg.dim),
      text_to_image_("decoder.text_to_image", cfg.dim, cfg.heads, rng),
      mask_fc1_("decoder.mask_mlp.fc1", cfg.dim, cfg.hidden, rng),
      mask_fc2_("decoder.mask_mlp.fc2", cfg.hidden, cfg.dim / 4, rng),
      bbox_fc1_("decoder.bbox_mlp.fc1", cfg.dim, cfg.hidden, rng),
      bbox_fc2_("decoder.bbox_mlp.fc2", cfg.hidden, 4, rng) {
  if (cfg.dim % 4 != 0) throw ConfigError("decoder: dim must be divisible by 4");
  // Near-zero hyper weights: initial mask probabilities start close to 0.5.
  mask_fc2_.weight.value = init_normal({cfg.hidden, cfg.dim / 4}, 0.001, rng);
}

void MaskDecoder::collect(ParameterList& out) {
  up1_.collect(out);
  up2_.collect(out);
  image_query_norm_.collect(out);
  text_kv_norm_.collect(out);
  image_to_text_.collect(out);
  text_query_norm_.collect(out);
  image_kv_norm_.collect(out);
  text_to_image_.collect(out);
  mask_fc1_.collect(out);
  mask_fc2_.collect(out);
  bbox_fc1_.collect(out);
  bbox_fc2_.collect(out);
}

Tensor canonical_box(const Tensor& raw) {
  if (raw.size() != 4) throw ShapeError("canonical_box: expected 4 values, got " + to_string(raw.shape()));
  const auto r = raw.data();
  // route[i] is the raw index feeding output i.
  std::array<std::size_t, 4> route{};
  route[0] = r[0] <= r[2] ? 0 : 2;
  route[2] = r[0] <= r[2] ? 2 : 0;
  route[1] = r[1] <= r[3] ? 1 : 3;
  route[3] = r[1] <= r[3] ? 3 : 1;
  std::vector<double> out(4);
  for (std::size_t i = 0; i < 4; ++i) out[i] = r[route[i]];
  return detail::emit({4}, std::move(out), {raw}, [route](std::span<const double> dy, GradSlots dx) {
    if (!dx[0]) return;
    for (std::size_t i = 0; i < 4; ++i) (*dx[0])[route[i]] += dy[i];
  });
}

Tensor bilinear_weights(std::size_t out, std::size_t in) {
  std::vector<double> w(out * in, 0.0);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    w[o * in + i0] += 1.0 - frac;
    w[o * in + i1] += frac;
  }
  return Tensor({out, in}, std::move(w));
}

Prediction DecoderAccess::decode(Context& ctx, const FusedFeatures& fused, const MaskDecoder& dec,
                                 DecoderTrace* trace) {
  const Tensor& im = fused.image;
  const Tensor& txt = fused.text;
  const std::size_t n = im.rows(), d = im.cols();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) {
    throw ConfigError("decode: " + std::to_string(n) + " image tokens do not form a square grid");
  }
  if (d != dec.cfg_.dim || txt.cols() != d) {
    throw ShapeError("decode: fused features " + to_string(im.shape()) + "/" + to_string(txt.shape()) +
                     " do not match decoder dim " + std::to_string(dec.cfg_.dim));
  }

  const Tensor f1 = gelu(nn::upconv2x(ctx, im.reshape({side, side, d}), dec.up1_));
  const Tensor f2 = gelu(nn::upconv2x(ctx, f1, dec.up2_));

  // Bidirectional exchange: image tokens read the text, then the text reads the
  // updated image tokens.
  const Tensor t_kv = dec.text_kv_norm_(ctx, txt);
  const Tensor im2 = add(im, nn::attn(ctx, dec.image_query_norm_(ctx, im), t_kv, t_kv, dec.image_to_text_));
  const Tensor i_kv = dec.image_kv_norm_(ctx, im2);
  const Tensor txt2 = add(txt, nn::attn(ctx, dec.text_query_norm_(ctx, txt), i_kv, i_kv, dec.text_to_image_));
  const Tensor f3 = slice_rows(txt2, 0, 1);

  const auto act = dec.cfg_.mlp_activation;
  const Tensor hyper = dec.mask_fc2_(ctx, nn::activate(dec.mask_fc1_(ctx, f3), act));  // [1, d/4]
  const Tensor box_raw = sigmoid(dec.bbox_fc2_(ctx, nn::activate(dec.bbox_fc1_(ctx, f3), act)));

  const std::size_t s = 4 * side, c = d / 4;
  const Tensor native = matmul(f2.reshape({s * s, c}), transpose(hyper)).reshape({s, s});
  Tensor logits = native;
  if (dec.cfg_.output_size != 0 && dec.cfg_.output_size != s) {
    const Tensor r = bilinear_weights(dec.cfg_.output_size, s);
    logits = matmul(matmul(r, native), transpose(r));
  }

  if (trace) *trace = DecoderTrace{f1, f2, f3, hyper, native};
  Prediction pred;
  pred.mask_logits = logits;
  pred.mask_probs = sigmoid(logits);
  pred.bbox = canonical_box(box_raw.reshape({4}));
  return pred;
}

Prediction decode(Context& ctx, const FusedFeatures& fused, const MaskDecoder& dec,
                  DecoderTrace* trace) {
  return DecoderAccess::decode(ctx, fused, dec, trace);
}

metrics::BinaryMask binarize(const Tensor& mask_probs, double threshold) {
  if (mask_probs.rank() != 2) throw ShapeError("binarize: expected a 2-D grid, got " + to_string(mask_probs.shape()));
  const std::size_t h = mask_probs.dim(0), w = mask_probs.dim(1);
  std::vector<std::uint8_t> bits(h * w);
  const auto p = mask_probs.data();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = p[i] >= threshold ? 1 : 0;
  return metrics::BinaryMask(w, h, std::move(bits));
}

}  // namespace tgfuse
