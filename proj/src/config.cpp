#include "tgfuse/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace tgfuse {

namespace {

bool parse_bool(std::string_view s, const std::string& what) {
  s = text::trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(what + ": expected a boolean, got '" + std::string(s) + "'");
}

struct Field {
  std::function<void(std::string_view, const std::string&)> set;
  std::function<std::string()> get;
};

using Section = std::vector<std::pair<std::string, Field>>;

Field size_field(std::size_t& v) {
  return {[&v](std::string_view s, const std::string& w) { v = text::parse_size(s, w); },
          [&v] { return std::to_string(v); }};
}
Field u64_field(std::uint64_t& v) {
  return {[&v](std::string_view s, const std::string& w) { v = text::parse_size(s, w); },
          [&v] { return std::to_string(v); }};
}
Field double_field(double& v) {
  return {[&v](std::string_view s, const std::string& w) { v = text::parse_double(s, w); },
          [&v] { return text::format_double(v); }};
}
Field bool_field(bool& v) {
  return {[&v](std::string_view s, const std::string& w) { v = parse_bool(s, w); },
          [&v] { return std::string(v ? "true" : "false"); }};
}
Field string_field(std::string& v) {
  return {[&v](std::string_view s, const std::string&) { v = std::string(text::trim(s)); }, [&v] { return v; }};
}

Field activation_field(nn::Activation& a) {
  return {[&a](std::string_view s, const std::string& w) {
            s = text::trim(s);
            if (s == "relu") a = nn::Activation::Relu;
            else if (s == "gelu") a = nn::Activation::Gelu;
            else throw ConfigError(w + ": expected relu or gelu, got '" + std::string(s) + "'");
          },
          [&a] { return std::string(nn::to_string(a)); }};
}

Section model_section(ModelConfig& m) {
  return {{"image_size", size_field(m.image_size)},
          {"channels", size_field(m.channels)},
          {"patch", size_field(m.patch)},
          {"dim", size_field(m.dim)},
          {"heads", size_field(m.heads)},
          {"image_layers", size_field(m.image_layers)},
          {"text_layers", size_field(m.text_layers)},
          {"text_max_len", size_field(m.text_max_len)},
          {"mixer_depth", size_field(m.mixer_depth)},
          {"ffn_mult", size_field(m.ffn_mult)},
          {"decoder_hidden", size_field(m.decoder_hidden)},
          {"decoder_activation", activation_field(m.decoder_activation)},
          {"resize_to_input", bool_field(m.resize_to_input)},
          {"init_seed", u64_field(m.init_seed)}};
}

std::vector<std::pair<std::string, Section>> sections(RunConfig& c) {
  Field level{[&c](std::string_view s, const std::string&) { c.train.level = synth::parse_level(std::string(text::trim(s))); },
              [&c] { return std::string(synth::to_string(c.train.level)); }};
  Field augment{[&c](std::string_view s, const std::string&) { c.train.augment = parse_augment(std::string(text::trim(s))); },
                [&c] { return std::string(to_string(c.train.augment)); }};
  return {
      {"model", model_section(c.model)},
      {"optim",
       {{"lr", double_field(c.optim.lr)},
        {"beta1", double_field(c.optim.beta1)},
        {"beta2", double_field(c.optim.beta2)},
        {"eps", double_field(c.optim.eps)},
        {"weight_decay", double_field(c.optim.weight_decay)},
        {"clip_norm", double_field(c.optim.clip_norm)},
        {"warmup_ratio", double_field(c.optim.warmup_ratio)}}},
      {"train",
       {{"batch_size", size_field(c.train.batch_size)},
        {"epochs", size_field(c.train.epochs)},
        {"seed", u64_field(c.train.seed)},
        {"level", level},
        {"freeze_encoders", bool_field(c.train.freeze_encoders)},
        {"lambda_bbox", double_field(c.train.lambda_bbox)},
        {"augment", augment}}},
      {"data",
       {{"seed", u64_field(c.data.seed)},
        {"train_count", size_field(c.data.train_count)},
        {"val_count", size_field(c.data.val_count)},
        {"test_count", size_field(c.data.test_count)},
        {"ambiguous", bool_field(c.data.ambiguous)},
        {"min_shapes", size_field(c.data.min_shapes)},
        {"max_shapes", size_field(c.data.max_shapes)}}},
      {"paths", {{"data_dir", string_field(c.paths.data_dir)}, {"out_dir", string_field(c.paths.out_dir)}}},
  };
}

std::string render(const std::vector<std::pair<std::string, Section>>& secs) {
  std::string out;
  for (const auto& [name, fields] : secs) {
    if (!out.empty()) out += '\n';
    out += "[" + name + "]\n";
    for (const auto& [key, field] : fields) out += key + " = " + field.get() + "\n";
  }
  return out;
}

}  // namespace

const char* to_string(Augment a) {
  switch (a) {
    case Augment::None: return "none";
    case Augment::HFlip: return "hflip";
    case Augment::Dihedral: return "dihedral";
  }
  return "?";
}

Augment parse_augment(const std::string& s) {
  if (s == "none") return Augment::None;
  if (s == "hflip") return Augment::HFlip;
  if (s == "dihedral") return Augment::Dihedral;
  throw InputError("unknown augmentation '" + s + "' (expected none|hflip|dihedral)");
}

synth::SceneConfig DataSettings::scene(std::size_t canvas) const {
  synth::SceneConfig sc;
  sc.canvas = canvas;
  sc.ambiguous = ambiguous;
  sc.min_shapes = std::max<std::size_t>(min_shapes, ambiguous ? 3 : 2);
  sc.max_shapes = std::max(max_shapes, sc.min_shapes);
  return sc;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.vocab_size = synth::grammar_vocabulary().size();
  return m;
}

void RunConfig::validate() const {
  model_config().validate();
  if (model.channels != 1) throw ConfigError("model.channels must be 1 for grayscale shape data");
  if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) throw ConfigError("optim.beta1 must be in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) throw ConfigError("optim.beta2 must be in [0, 1)");
  if (!(optim.eps > 0.0)) throw ConfigError("optim.eps must be positive");
  if (!(optim.weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(optim.warmup_ratio >= 0.0 && optim.warmup_ratio < 1.0)) throw ConfigError("optim.warmup_ratio must be in [0, 1)");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (train.epochs == 0) throw ConfigError("train.epochs must be positive");
  if (!(train.lambda_bbox >= 0.0)) throw ConfigError("train.lambda_bbox must be >= 0");
  if (data.train_count == 0 || data.val_count == 0 || data.test_count == 0) {
    throw ConfigError("data counts must be positive");
  }
  data.scene(model.image_size).validate();
}

RunConfig RunConfig::parse(const std::string& input) {
  RunConfig cfg;
  auto secs = sections(cfg);
  Section* current = nullptr;
  std::string current_name;
  std::istringstream in(input);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      current_name = std::string(text::trim(line.substr(1, line.size() - 2)));
      current = nullptr;
      for (auto& [name, fields] : secs) {
        if (name == current_name) current = &fields;
      }
      if (!current) throw ConfigError(where + ": unknown section [" + current_name + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    if (!current) throw ConfigError(where + ": key outside of a section");
    const std::string key(text::trim(line.substr(0, eq)));
    const std::string_view value = text::trim(line.substr(eq + 1));
    bool found = false;
    for (auto& [name, field] : *current) {
      if (name != key) continue;
      try {
        field.set(value, current_name + "." + key);
      } catch (const InputError& e) {
        throw ConfigError(where + ": " + e.what());
      }
      found = true;
    }
    if (!found) throw ConfigError(where + ": unknown key '" + key + "' in [" + current_name + "]");
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::serialize() const {
  RunConfig copy = *this;
  return render(sections(copy));
}

std::string RunConfig::serialize_model() const {
  ModelConfig copy = model;
  return render({{"model", model_section(copy)}});
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("config: cannot write " + path.string());
  out << serialize();
}

std::vector<std::string> model_differences(const ModelConfig& a, const ModelConfig& b) {
  ModelConfig ca = a, cb = b;
  const Section sa = model_section(ca), sb = model_section(cb);
  std::vector<std::string> diff;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].second.get() != sb[i].second.get()) {
      diff.push_back("model." + sa[i].first + " (" + sa[i].second.get() + " vs " + sb[i].second.get() + ")");
    }
  }
  return diff;
}

}  // namespace tgfuse
