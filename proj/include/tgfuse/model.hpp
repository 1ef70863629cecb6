#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tgfuse/decoder.hpp"
#include "tgfuse/encoders.hpp"
#include "tgfuse/mixer.hpp"

namespace tgfuse {

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t channels = 1;
  std::size_t patch = 8;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t image_layers = 4;
  std::size_t text_layers = 2;
  std::size_t text_max_len = 16;
  std::size_t mixer_depth = 4;
  std::size_t ffn_mult = 4;
  std::size_t decoder_hidden = 64;
  nn::Activation decoder_activation = nn::Activation::Relu;
  std::size_t vocab_size = 0;
  /// Bilinearly resize mask logits to the input resolution.
  bool resize_to_input = true;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// Image encoder, text encoder, stacked feature mixer and mask decoder.
/// Not movable: the parameter list points into the members.
class TgModel {
 public:
  TgModel() = default;
  explicit TgModel(const ModelConfig& cfg);

  TgModel(const TgModel&) = delete;
  TgModel& operator=(const TgModel&) = delete;

  const ModelConfig& config() const noexcept { return cfg_; }

  /// Every parameter in a fixed order (image, text, mixer, decoder).
  const ParameterList& parameters() const noexcept { return params_; }
  Parameter& parameter(const std::string& name);

  void set_encoders_frozen(bool frozen);

  ImageEncoder& image_encoder() { return image_; }
  TextEncoder& text_encoder() { return text_; }
  std::vector<MixerBlock>& mixer() { return mixer_; }
  MaskDecoder& decoder() { return decoder_; }

  /// image [H, W, C]; tokens SOS ... EOS, padded internally to text_max_len.
  Prediction forward(Context& ctx, const Tensor& image, std::span<const std::size_t> tokens,
                     DecoderTrace* trace = nullptr, FusedFeatures* fused = nullptr) const;

 private:
  ModelConfig cfg_;
  ImageEncoder image_;
  TextEncoder text_;
  std::vector<MixerBlock> mixer_;
  MaskDecoder decoder_;
  ParameterList params_;
};

}  // namespace tgfuse
