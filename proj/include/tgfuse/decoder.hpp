#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "tgfuse/metrics.hpp"
#include "tgfuse/mixer.hpp"
#include "tgfuse/nn.hpp"

namespace tgfuse {

struct MaskDecoderConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t hidden = 64;  // MLP hidden width
  /// Side length of returned logits; 0 keeps the native 4x token-grid size.
  std::size_t output_size = 0;
  nn::Activation mlp_activation = nn::Activation::Relu;
};

/// Decodes fused features into mask logits and a box:
///
///   F1   = UpConv2x(F_fused_im as a grid)          [2G, 2G, d/2]
///   F2   = UpConv2x(F1)                            [4G, 4G, d/4]
///   F3   = first text token after image<->text cross-attention
///   Mask = <MLP_mask(F3), F2[p]> at every pixel p
///   Box  = canonicalized sigmoid(MLP_bbox(F3))
class MaskDecoder {
 public:
  MaskDecoder() = default;
  MaskDecoder(const MaskDecoderConfig& cfg, Rng& rng);

  const MaskDecoderConfig& config() const noexcept { return cfg_; }
  void collect(ParameterList& out);

 private:
  friend struct DecoderAccess;
  MaskDecoderConfig cfg_;
  nn::UpConv2x up1_, up2_;
  nn::LayerNorm image_query_norm_, text_kv_norm_;
  nn::AttentionBlock image_to_text_;
  nn::LayerNorm text_query_norm_, image_kv_norm_;
  nn::AttentionBlock text_to_image_;
  nn::Linear mask_fc1_, mask_fc2_;
  nn::Linear bbox_fc1_, bbox_fc2_;
};

struct Prediction {
  Tensor mask_logits;  // [S, S]
  Tensor mask_probs;   // sigmoid(mask_logits)
  Tensor bbox;         // [4] = (x1, y1, x2, y2), normalized, x1 <= x2, y1 <= y2
};

/// Intermediate tensors of one decode, exposed for inspection.
struct DecoderTrace {
  Tensor f1, f2, f3, hyper;
  Tensor native_logits;
};

Prediction decode(Context& ctx, const FusedFeatures& fused, const MaskDecoder& dec,
                  DecoderTrace* trace = nullptr);

/// (a, b, c, d) -> (min(a, c), min(b, d), max(a, c), max(b, d)).
Tensor canonical_box(const Tensor& raw);

/// Half-pixel-centred bilinear interpolation weights [out, in].
Tensor bilinear_weights(std::size_t out, std::size_t in);

/// probs >= threshold -> 1.
metrics::BinaryMask binarize(const Tensor& mask_probs, double threshold = 0.5);

}  // namespace tgfuse
