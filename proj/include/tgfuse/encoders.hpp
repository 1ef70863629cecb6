#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tgfuse/nn.hpp"

namespace tgfuse {

using TokenIds = std::vector<std::size_t>;

/// Word-level vocabulary. Ids 0..3 are reserved (PAD, SOS, EOS, UNK); word i
/// of the word list gets id i + 4.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kSos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  /// One token per line; blank lines are rejected.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return kReserved + words_.size(); }
  std::size_t id(std::string_view word) const;
  std::string token(std::size_t id) const;
  const std::vector<std::string>& words() const noexcept { return words_; }

  /// Whitespace tokenization wrapped in SOS ... EOS.
  TokenIds encode(std::string_view text) const;
  /// Body words between SOS and EOS joined by single spaces.
  std::string decode(std::span<const std::size_t> ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ImageEncoderConfig {
  std::size_t height = 64, width = 64, channels = 1;
  std::size_t patch = 8;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t hidden = 256;
};

struct TextEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t max_len = 16;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t hidden = 256;
};

/// Patch embedding followed by pre-norm transformer layers and a final norm.
class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(const ImageEncoderConfig& cfg, Rng& rng);

  const ImageEncoderConfig& config() const noexcept { return cfg_; }
  std::size_t tokens() const noexcept { return embed_.tokens(); }
  void collect(ParameterList& out);

 private:
  friend Tensor encode_image(Context& ctx, const Tensor& image, const ImageEncoder& enc);
  ImageEncoderConfig cfg_;
  nn::PatchEmbed embed_;
  std::vector<nn::TransformerLayer> layers_;
  nn::LayerNorm final_norm_;
};

/// [H, W, C] image with values in [0, 1] -> F_im [(H/p)(W/p), d].
Tensor encode_image(Context& ctx, const Tensor& image, const ImageEncoder& enc);

struct TextFeatures {
  /// Layer-normed, projected activations for every position [L, d].
  Tensor sequence;
  /// Row of `sequence` at the EOS position [d].
  Tensor eos;
  std::size_t eos_index = 0;
};

/// Token + positional embeddings, causal transformer layers, final norm and a
/// bias-free projection into the shared embedding space.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const TextEncoderConfig& cfg, Rng& rng);

  const TextEncoderConfig& config() const noexcept { return cfg_; }
  void collect(ParameterList& out);

 private:
  friend TextFeatures encode_text(Context& ctx, std::span<const std::size_t> tokens,
                                  const TextEncoder& enc);
  TextEncoderConfig cfg_;
  Parameter token_embedding_;
  Parameter pos_embedding_;
  std::vector<nn::TransformerLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear projection_;
};

/// Checks SOS-first, exactly one EOS, PAD-only tail and length <= max_len.
void validate_tokens(std::span<const std::size_t> tokens, std::size_t max_len);

TextFeatures encode_text(Context& ctx, std::span<const std::size_t> tokens, const TextEncoder& enc);

/// Pads with PAD up to `length`.
TokenIds pad_tokens(std::span<const std::size_t> tokens, std::size_t length);

/// Freezing keeps gradients flowing through the encoder but excludes its
/// parameters from optimizer updates.
void set_frozen(ImageEncoder& enc, bool frozen);
void set_frozen(TextEncoder& enc, bool frozen);

}  // namespace tgfuse
