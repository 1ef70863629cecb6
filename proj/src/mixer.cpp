#include "tgfuse/mixer.hpp"

namespace tgfuse {

MixerBlock::MixerBlock(const std::string& name, std::size_t dim, std::size_t heads,
                       std::size_t hidden, Rng& rng)
    : text_norm(name + ".text_norm", dim),
      self_attention(name + ".self_attn", dim, heads, rng),
      query_norm(name + ".query_norm", dim),
      image_kv_norm(name + ".image_kv_norm", dim),
      text_to_image(name + ".text_to_image", dim, heads, rng),
      ffn_norm(name + ".ffn_norm", dim),
      ffn(name + ".ffn", dim, hidden, nn::Activation::Gelu, rng),
      image_query_norm(name + ".image_query_norm", dim),
      text_kv_norm(name + ".text_kv_norm", dim),
      image_to_text(name + ".image_to_text", dim, heads, rng) {}

void MixerBlock::collect(ParameterList& out) {
  text_norm.collect(out);
  self_attention.collect(out);
  query_norm.collect(out);
  image_kv_norm.collect(out);
  text_to_image.collect(out);
  ffn_norm.collect(out);
  ffn.collect(out);
  image_query_norm.collect(out);
  text_kv_norm.collect(out);
  image_to_text.collect(out);
}

FusedFeatures mix_block(Context& ctx, const Tensor& f_im, const Tensor& f_text,
                        const MixerBlock& block) {
  if (f_im.rank() != 2 || f_text.rank() != 2 || f_im.dim(1) != f_text.dim(1) ||
      f_im.dim(1) != block.self_attention.dim) {
    throw ShapeError("mix_block: F_im " + to_string(f_im.shape()) + " and F_text " +
                     to_string(f_text.shape()) + " do not share the block dim " +
                     std::to_string(block.self_attention.dim));
  }
  const Tensor t0 = block.text_norm(ctx, f_text);
  const Tensor text1 = add(f_text, nn::attn(ctx, t0, t0, t0, block.self_attention));

  const Tensor im_kv = block.image_kv_norm(ctx, f_im);
  const Tensor cross = nn::attn(ctx, block.query_norm(ctx, text1), im_kv, im_kv, block.text_to_image);
  Tensor text2;
  if (block.image_residual_for_text) {
    if (f_im.shape() != f_text.shape()) {
      throw ShapeError("mix_block: image residual on the text stream needs L_t == N_tok, got " +
                       to_string(f_text.shape()) + " vs " + to_string(f_im.shape()));
    }
    text2 = add(f_im, cross);
  } else {
    text2 = add(text1, cross);
  }

  const Tensor fused_text = add(text2, nn::feed_forward(ctx, block.ffn_norm(ctx, text2), block.ffn));

  const Tensor text_kv = block.text_kv_norm(ctx, fused_text);
  const Tensor fused_im = add(
      f_im, nn::attn(ctx, block.image_query_norm(ctx, f_im), text_kv, text_kv, block.image_to_text));
  return {fused_im, fused_text};
}

FusedFeatures mix(Context& ctx, const Tensor& f_im, const Tensor& f_text,
                  std::span<const MixerBlock> blocks) {
  if (blocks.empty()) throw ConfigError("mix: mixer stack is empty");
  FusedFeatures state{f_im, f_text};
  for (const auto& block : blocks) state = mix_block(ctx, state.image, state.text, block);
  return state;
}

}  // namespace tgfuse
