#include "tgfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tgfuse {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw ParseError(std::string("checkpoint: truncated ") + what, pos_);
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const TgModel& model) {
  std::string out = "TGLM";
  put<std::uint32_t>(out, Checkpoint::kVersion);
  const std::string model_cfg = cfg.serialize_model();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model_cfg.size()));
  out += model_cfg;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const Parameter* p : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put<std::uint64_t>(out, d);
    for (double v : p->value.data()) put<double>(out, v);
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str());
  Checkpoint ck;
  try {
    if (r.bytes(4, "magic") != "TGLM") throw ParseError("checkpoint: bad magic", 0);
    const auto version = r.get<std::uint32_t>("version");
    if (version != Checkpoint::kVersion) {
      throw ParseError("checkpoint: unsupported version " + std::to_string(version), 4);
    }
    ck.model_config = r.bytes(r.get<std::uint32_t>("config length"), "config");
    const auto count = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.bytes(r.get<std::uint32_t>("name length"), "name");
      const auto rank = r.get<std::uint32_t>("rank");
      if (rank > 8) throw ParseError("checkpoint: implausible rank for " + name, r.pos());
      Shape shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>("dims"));
      std::vector<double> data(numel(shape));
      for (auto& v : data) v = r.get<double>("values");
      ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!r.done()) throw ParseError("checkpoint: trailing bytes", r.pos());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset);
  }
  return ck;
}

void load_weights(TgModel& model, const Checkpoint& ckpt) {
  std::vector<std::string> problems;
  std::vector<bool> seen(model.parameters().size(), false);
  for (const auto& [name, value] : ckpt.tensors) {
    bool matched = false;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      Parameter* p = model.parameters()[i];
      if (p->name != name) continue;
      matched = true;
      seen[i] = true;
      if (p->value.shape() != value.shape()) {
        problems.push_back(name + " shape " + to_string(value.shape()) + " vs model " + to_string(p->value.shape()));
      } else {
        p->value = value;
      }
    }
    if (!matched) problems.push_back("unexpected tensor " + name);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) problems.push_back("missing tensor " + model.parameters()[i]->name);
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
}

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
  try {
    return RunConfig::parse(ckpt.model_config).model_config();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("checkpoint model config: ") + e.what());
  }
}

std::unique_ptr<TgModel> load_model(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  auto model = std::make_unique<TgModel>(checkpoint_model_config(ck));
  load_weights(*model, ck);
  return model;
}

}  // namespace tgfuse
