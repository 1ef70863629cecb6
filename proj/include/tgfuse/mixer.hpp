#pragma once

#include <span>
#include <string>
#include <vector>

#include "tgfuse/nn.hpp"

namespace tgfuse {

/// Output of the feature mixer; shapes equal the F_im / F_text inputs.
struct FusedFeatures {
  Tensor image;  // F_fused_im [N_tok, d]
  Tensor text;   // F_fused_text [L_t, d]
};

/// One query-based image-text fusion block:
///
///   F_text1      = F_text  + attn(F_text, F_text)
///   F_text2      = F_text1 + cross_attn(F_text1 -> F_im)
///   F_fused_text = F_text2 + FFN(F_text2)
///   F_fused_im   = F_im    + cross_attn(F_im -> F_fused_text)
///
/// Every attention/FFN input is layer-normed first. With
/// `image_residual_for_text` the second line uses F_im as its residual
/// instead, which is only shape-valid when L_t == N_tok.
struct MixerBlock {
  MixerBlock() = default;
  MixerBlock(const std::string& name, std::size_t dim, std::size_t heads, std::size_t hidden,
             Rng& rng);

  void collect(ParameterList& out);

  nn::LayerNorm text_norm;
  nn::AttentionBlock self_attention;
  nn::LayerNorm query_norm;
  nn::LayerNorm image_kv_norm;
  nn::AttentionBlock text_to_image;
  nn::LayerNorm ffn_norm;
  nn::FeedForward ffn;
  nn::LayerNorm image_query_norm;
  nn::LayerNorm text_kv_norm;
  nn::AttentionBlock image_to_text;
  bool image_residual_for_text = false;
};

FusedFeatures mix_block(Context& ctx, const Tensor& f_im, const Tensor& f_text,
                        const MixerBlock& block);

/// Applies the blocks in order, each consuming the previous block's output.
FusedFeatures mix(Context& ctx, const Tensor& f_im, const Tensor& f_text,
                  std::span<const MixerBlock> blocks);

}  // namespace tgfuse
