#include "tgfuse/encoders.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tgfuse {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty() || words_[i].find_first_of(" \t\r\n") != std::string::npos) {
      throw InputError("vocabulary: invalid token '" + words_[i] + "'");
    }
    if (!index_.emplace(words_[i], kReserved + i).second) {
      throw InputError("vocabulary: duplicate token '" + words_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("vocabulary: cannot open " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw InputError("vocabulary: blank line in " + path.string());
    words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("vocabulary: cannot write " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocabulary::token(std::size_t id) const {
  switch (id) {
    case kPad: return "<pad>";
    case kSos: return "<sos>";
    case kEos: return "<eos>";
    case kUnk: return "<unk>";
    default: break;
  }
  if (id - kReserved >= words_.size()) throw InputError("vocabulary: id " + std::to_string(id) + " out of range");
  return words_[id - kReserved];
}

TokenIds Vocabulary::encode(std::string_view text) const {
  TokenIds ids{kSos};
  std::istringstream is{std::string(text)};
  std::string word;
  while (is >> word) ids.push_back(id(word));
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (id == kSos || id == kPad) continue;
    if (id == kEos) break;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

ImageEncoder::ImageEncoder(const ImageEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      embed_("image.embed", cfg.height, cfg.width, cfg.channels, cfg.patch, cfg.dim, rng),
      final_norm_("image.norm", cfg.dim) {
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    layers_.emplace_back("image.layer" + std::to_string(i), cfg.dim, cfg.heads, cfg.hidden, false, rng);
  }
}

void ImageEncoder::collect(ParameterList& out) {
  embed_.collect(out);
  for (auto& layer : layers_) layer.collect(out);
  final_norm_.collect(out);
}

Tensor encode_image(Context& ctx, const Tensor& image, const ImageEncoder& enc) {
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("encode_image: pixel value outside [0, 1]");
  }
  Tensor x = nn::patch_embed(ctx, image, enc.embed_);
  for (const auto& layer : enc.layers_) x = layer(ctx, x);
  return enc.final_norm_(ctx, x);
}

TextEncoder::TextEncoder(const TextEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg), final_norm_("text.norm", cfg.dim) {
  if (cfg.vocab_size <= Vocabulary::kReserved) throw ConfigError("text encoder: empty vocabulary");
  if (cfg.max_len < 2) throw ConfigError("text encoder: max_len must be at least 2");
  token_embedding_ = Parameter{"text.token_embedding", init_normal({cfg.vocab_size, cfg.dim}, 0.02, rng), {}, false};
  pos_embedding_ = Parameter{"text.pos_embedding", init_normal({cfg.max_len, cfg.dim}, 0.01, rng), {}, false};
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    layers_.emplace_back("text.layer" + std::to_string(i), cfg.dim, cfg.heads, cfg.hidden, true, rng);
  }
  projection_ = nn::Linear("text.projection", cfg.dim, cfg.dim, rng, false);
}

void TextEncoder::collect(ParameterList& out) {
  out.push_back(&token_embedding_);
  out.push_back(&pos_embedding_);
  for (auto& layer : layers_) layer.collect(out);
  final_norm_.collect(out);
  projection_.collect(out);
}

void validate_tokens(std::span<const std::size_t> tokens, std::size_t max_len) {
  if (tokens.size() > max_len) {
    throw InputError("text: " + std::to_string(tokens.size()) + " tokens exceed max length " +
                     std::to_string(max_len) + " (would truncate)");
  }
  if (tokens.empty() || tokens.front() != Vocabulary::kSos) throw InputError("text: sequence must start with SOS");
  const auto eos_count = std::count(tokens.begin(), tokens.end(), Vocabulary::kEos);
  if (eos_count != 1) throw InputError("text: sequence must contain exactly one EOS");
  const auto eos = std::find(tokens.begin(), tokens.end(), Vocabulary::kEos);
  if (std::any_of(eos + 1, tokens.end(), [](std::size_t t) { return t != Vocabulary::kPad; })) {
    throw InputError("text: only PAD may follow EOS");
  }
}

TextFeatures encode_text(Context& ctx, std::span<const std::size_t> tokens, const TextEncoder& enc) {
  validate_tokens(tokens, enc.cfg_.max_len);
  for (std::size_t t : tokens) {
    if (t >= enc.cfg_.vocab_size) throw InputError("text: token id " + std::to_string(t) + " outside vocabulary");
  }
  const std::size_t len = tokens.size();
  Tensor x = add(gather_rows(ctx(enc.token_embedding_), tokens),
                 slice_rows(ctx(enc.pos_embedding_), 0, len));
  for (const auto& layer : enc.layers_) x = layer(ctx, x);
  TextFeatures out;
  out.sequence = enc.projection_(ctx, enc.final_norm_(ctx, x));
  out.eos_index = static_cast<std::size_t>(
      std::find(tokens.begin(), tokens.end(), Vocabulary::kEos) - tokens.begin());
  out.eos = slice_rows(out.sequence, out.eos_index, 1).reshape({enc.cfg_.dim});
  return out;
}

TokenIds pad_tokens(std::span<const std::size_t> tokens, std::size_t length) {
  TokenIds out(tokens.begin(), tokens.end());
  if (out.size() < length) out.resize(length, Vocabulary::kPad);
  return out;
}

void set_frozen(ImageEncoder& enc, bool frozen) {
  ParameterList params;
  enc.collect(params);
  for (Parameter* p : params) p->frozen = frozen;
}

void set_frozen(TextEncoder& enc, bool frozen) {
  ParameterList params;
  enc.collect(params);
  for (Parameter* p : params) p->frozen = frozen;
}

}  // namespace tgfuse
