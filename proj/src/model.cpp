#include "tgfuse/model.hpp"

namespace tgfuse {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(image_size, "image_size");
  positive(channels, "channels");
  positive(patch, "patch");
  positive(dim, "dim");
  positive(heads, "heads");
  positive(text_max_len, "text_max_len");
  positive(mixer_depth, "mixer_depth");
  positive(ffn_mult, "ffn_mult");
  positive(decoder_hidden, "decoder_hidden");
  if (vocab_size <= Vocabulary::kReserved) throw ConfigError("model.vocab_size must exceed the reserved ids");
  if (image_size % patch != 0) {
    throw ConfigError("model.patch " + std::to_string(patch) + " does not divide image_size " +
                      std::to_string(image_size));
  }
  if (dim % heads != 0) throw ConfigError("model.heads must divide model.dim");
  if (dim % 4 != 0) throw ConfigError("model.dim must be divisible by 4");
  if (text_max_len < 2) throw ConfigError("model.text_max_len must hold SOS and EOS");
}

TgModel::TgModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg.init_seed);

  ImageEncoderConfig ic;
  ic.height = ic.width = cfg.image_size;
  ic.channels = cfg.channels;
  ic.patch = cfg.patch;
  ic.dim = cfg.dim;
  ic.heads = cfg.heads;
  ic.layers = cfg.image_layers;
  ic.hidden = cfg.ffn_mult * cfg.dim;
  image_ = ImageEncoder(ic, rng);

  TextEncoderConfig tc;
  tc.vocab_size = cfg.vocab_size;
  tc.max_len = cfg.text_max_len;
  tc.dim = cfg.dim;
  tc.heads = cfg.heads;
  tc.layers = cfg.text_layers;
  tc.hidden = cfg.ffn_mult * cfg.dim;
  text_ = TextEncoder(tc, rng);

  for (std::size_t i = 0; i < cfg.mixer_depth; ++i) {
    mixer_.emplace_back("mixer." + std::to_string(i), cfg.dim, cfg.heads, cfg.ffn_mult * cfg.dim, rng);
  }

  MaskDecoderConfig dc;
  dc.dim = cfg.dim;
  dc.heads = cfg.heads;
  dc.hidden = cfg.decoder_hidden;
  dc.mlp_activation = cfg.decoder_activation;
  dc.output_size = cfg.resize_to_input ? cfg.image_size : 0;
  decoder_ = MaskDecoder(dc, rng);

  image_.collect(params_);
  text_.collect(params_);
  for (auto& block : mixer_) block.collect(params_);
  decoder_.collect(params_);
}

Parameter& TgModel::parameter(const std::string& name) {
  for (Parameter* p : params_) {
    if (p->name == name) return *p;
  }
  throw InputError("model has no parameter named '" + name + "'");
}

void TgModel::set_encoders_frozen(bool frozen) {
  set_frozen(image_, frozen);
  set_frozen(text_, frozen);
}

Prediction TgModel::forward(Context& ctx, const Tensor& image, std::span<const std::size_t> tokens,
                            DecoderTrace* trace, FusedFeatures* fused) const {
  const Tensor f_im = encode_image(ctx, image, image_);
  const TokenIds padded = pad_tokens(tokens, cfg_.text_max_len);
  const TextFeatures f_text = encode_text(ctx, padded, text_);
  const FusedFeatures mixed = mix(ctx, f_im, f_text.sequence, mixer_);
  if (fused) *fused = mixed;
  return decode(ctx, mixed, decoder_, trace);
}

}  // namespace tgfuse
