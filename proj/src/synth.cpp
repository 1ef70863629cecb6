#include "tgfuse/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "text_util.hpp"
#include "tgfuse/parameter.hpp"

namespace tgfuse::synth {

namespace {

constexpr std::array<ShapeKind, 3> kKinds{ShapeKind::Disk, ShapeKind::Square, ShapeKind::Triangle};

struct Box {
  std::int64_t x1, y1, x2, y2;
};

Box box_of(const ShapeSpec& s) { return {s.cx - s.size, s.cy - s.size, s.cx + s.size, s.cy + s.size}; }

bool separated(const Box& a, const Box& b, std::int64_t gap) {
  return b.x1 - a.x2 - 1 >= gap || a.x1 - b.x2 - 1 >= gap || b.y1 - a.y2 - 1 >= gap ||
         a.y1 - b.y2 - 1 >= gap;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& s) {
  for (ShapeKind k : kKinds) {
    if (s == to_string(k)) return k;
  }
  throw InputError("unknown shape kind '" + s + "'");
}

const char* to_string(DescriptionLevel level) {
  switch (level) {
    case DescriptionLevel::None: return "none";
    case DescriptionLevel::Simple: return "simple";
    case DescriptionLevel::Complex: return "complex";
  }
  return "?";
}

DescriptionLevel parse_level(const std::string& s) {
  if (s == "none") return DescriptionLevel::None;
  if (s == "simple") return DescriptionLevel::Simple;
  if (s == "complex") return DescriptionLevel::Complex;
  throw InputError("unknown description level '" + s + "' (expected none|simple|complex)");
}

bool ShapeSpec::covers(std::int64_t x, std::int64_t y) const {
  const std::int64_t dx = x - cx, dy = y - cy;
  if (dx < -size || dx > size || dy < -size || dy > size) return false;
  switch (kind) {
    case ShapeKind::Disk: return dx * dx + dy * dy <= size * size;
    case ShapeKind::Square: return true;
    case ShapeKind::Triangle: return 2 * std::abs(dx) <= y - (cy - size);
  }
  return false;
}

std::string SceneSpec::serialize() const {
  std::string out = std::to_string(width) + ":" + std::to_string(height) + ":" + std::to_string(target) + "|";
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    if (i) out += ';';
    out += std::string(to_string(s.kind)) + ":" + std::to_string(s.cx) + ":" + std::to_string(s.cy) + ":" +
           std::to_string(s.size) + ":" + std::to_string(s.level);
  }
  return out;
}

SceneSpec SceneSpec::parse(const std::string& text) {
  const auto bar = text.find('|');
  if (bar == std::string::npos) throw InputError("scene: missing '|' in '" + text + "'");
  const auto head = text::split(std::string_view(text).substr(0, bar), ':');
  if (head.size() != 3) throw InputError("scene: header must be W:H:target in '" + text + "'");
  SceneSpec scene;
  scene.width = text::parse_size(head[0], "scene width");
  scene.height = text::parse_size(head[1], "scene height");
  scene.target = text::parse_size(head[2], "scene target");
  for (const auto& item : text::split(std::string_view(text).substr(bar + 1), ';')) {
    const auto f = text::split(item, ':');
    if (f.size() != 5) throw InputError("scene: shape must be kind:cx:cy:s:level, got '" + item + "'");
    ShapeSpec s;
    s.kind = parse_shape_kind(f[0]);
    s.cx = static_cast<std::int64_t>(text::parse_size(f[1], "scene cx"));
    s.cy = static_cast<std::int64_t>(text::parse_size(f[2], "scene cy"));
    s.size = static_cast<std::int64_t>(text::parse_size(f[3], "scene size"));
    s.level = static_cast<int>(text::parse_size(f[4], "scene level"));
    if (s.level > 255) throw InputError("scene: intensity level above 255");
    scene.shapes.push_back(s);
  }
  if (scene.target >= scene.shapes.size()) throw InputError("scene: target index out of range");
  return scene;
}

void SceneConfig::validate() const {
  if (canvas < 32) throw ConfigError("scene: canvas must be at least 32");
  if (min_shapes < 2 || max_shapes < min_shapes || max_shapes > 4) {
    throw ConfigError("scene: shape count range must lie within [2, 4]");
  }
  if (!ambiguous && max_shapes > kKinds.size()) {
    throw ConfigError("scene: unambiguous scenes hold at most one shape per kind");
  }
  if (min_size < 1 || max_size < min_size) throw ConfigError("scene: invalid size range");
  if (min_level < 1 || min_level > 255) throw ConfigError("scene: min_level must be in [1, 255]");
  if (max_attempts == 0) throw ConfigError("scene: max_attempts must be positive");
}

Quadrant quadrant_of(const ShapeSpec& shape, std::size_t width, std::size_t height) {
  const bool left = shape.cx < static_cast<std::int64_t>(width / 2);
  const bool upper = shape.cy < static_cast<std::int64_t>(height / 2);
  if (upper) return left ? Quadrant::UpperLeft : Quadrant::UpperRight;
  return left ? Quadrant::LowerLeft : Quadrant::LowerRight;
}

SceneSpec generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const auto w = static_cast<std::int64_t>(cfg.canvas);
  const auto mid = w / 2;

  std::vector<ShapeKind> kinds;
  std::size_t target = 0;
  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(cfg.min_shapes), static_cast<std::int64_t>(cfg.max_shapes)));
  if (cfg.ambiguous) {
    const ShapeKind k = kKinds[rng.below(3)];
    std::vector<ShapeKind> others;
    for (ShapeKind o : kKinds) {
      if (o != k) others.push_back(o);
    }
    kinds = {k, k, others[rng.below(others.size())]};
    while (kinds.size() < std::max<std::size_t>(n, 3)) kinds.push_back(others[rng.below(others.size())]);
    target = rng.below(2);
  } else {
    std::vector<ShapeKind> pool(kKinds.begin(), kKinds.end());
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
    kinds.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    target = rng.below(n);
  }

  SceneSpec scene;
  scene.width = scene.height = cfg.canvas;
  scene.target = target;
  std::size_t attempts = 0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    while (true) {
      if (attempts++ >= cfg.max_attempts) {
        throw GenerationError("scene placement failed after " + std::to_string(cfg.max_attempts) + " attempts",
                              seed);
      }
      ShapeSpec s;
      s.kind = kinds[i];
      s.size = rng.between(cfg.min_size, cfg.max_size);
      const std::int64_t lo = cfg.margin + s.size, hi = w - 1 - cfg.margin - s.size;
      if (hi < lo) continue;
      s.cx = rng.between(lo, hi);
      s.cy = rng.between(lo, hi);
      s.level = static_cast<int>(rng.between(cfg.min_level, 255));
      if (std::abs(s.cx - mid) < cfg.midline_gap || std::abs(s.cy - mid) < cfg.midline_gap) continue;
      if (cfg.ambiguous && i == 1 &&
          quadrant_of(s, cfg.canvas, cfg.canvas) == quadrant_of(scene.shapes[0], cfg.canvas, cfg.canvas)) {
        continue;
      }
      const Box b = box_of(s);
      const bool clear = std::all_of(scene.shapes.begin(), scene.shapes.end(),
                                     [&](const ShapeSpec& o) { return separated(b, box_of(o), cfg.gap); });
      if (!clear) continue;
      scene.shapes.push_back(s);
      break;
    }
  }
  return scene;
}

std::array<double, 4> tight_bbox(const metrics::BinaryMask& mask) {
  std::size_t x1 = mask.width(), y1 = mask.height(), x2 = 0, y2 = 0;
  bool any = false;
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      any = true;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x);
      y2 = std::max(y2, y);
    }
  }
  if (!any) return {0.0, 0.0, 0.0, 0.0};
  const double w = static_cast<double>(mask.width()), h = static_cast<double>(mask.height());
  return {x1 / w, y1 / h, (x2 + 1) / w, (y2 + 1) / h};
}

Rendered render(const SceneSpec& scene) {
  if (scene.target >= scene.shapes.size()) throw InputError("render: target index out of range");
  const std::size_t w = scene.width, h = scene.height;
  std::vector<double> pixels(w * h, 0.0);
  metrics::BinaryMask mask(w, h);
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    const auto& s = scene.shapes[i];
    const Box b = box_of(s);
    for (std::int64_t y = std::max<std::int64_t>(b.y1, 0); y <= std::min<std::int64_t>(b.y2, h - 1); ++y) {
      for (std::int64_t x = std::max<std::int64_t>(b.x1, 0); x <= std::min<std::int64_t>(b.x2, w - 1); ++x) {
        if (!s.covers(x, y)) continue;
        pixels[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = s.intensity();
        if (i == scene.target) mask.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      }
    }
  }
  Rendered out;
  out.image = Tensor({h, w, 1}, std::move(pixels));
  out.bbox = tight_bbox(mask);
  out.mask = std::move(mask);
  return out;
}

const Vocabulary& grammar_vocabulary() {
  static const Vocabulary vocab({"the", "disk", "square", "triangle", "in", "upper", "lower", "left", "right",
                                 "quadrant", "above", "below", "of"});
  return vocab;
}

namespace {

const char* quadrant_words(Quadrant q) {
  switch (q) {
    case Quadrant::UpperLeft: return "upper left";
    case Quadrant::UpperRight: return "upper right";
    case Quadrant::LowerLeft: return "lower left";
    case Quadrant::LowerRight: return "lower right";
  }
  return "";
}

const char* relation_word(const ShapeSpec& t, const ShapeSpec& ref) {
  const std::int64_t dx = t.cx - ref.cx, dy = t.cy - ref.cy;
  if (std::abs(dx) >= std::abs(dy)) return dx < 0 ? "left" : "right";
  return dy < 0 ? "above" : "below";
}

}  // namespace

Description describe(const SceneSpec& scene, DescriptionLevel level, const Vocabulary& vocab) {
  if (scene.target >= scene.shapes.size()) throw InputError("describe: target index out of range");
  const ShapeSpec& t = scene.shapes[scene.target];
  Description d;
  switch (level) {
    case DescriptionLevel::None: break;
    case DescriptionLevel::Simple: d.text = to_string(t.kind); break;
    case DescriptionLevel::Complex: {
      const Quadrant q = quadrant_of(t, scene.width, scene.height);
      const ShapeSpec* ref = nullptr;
      for (const auto& s : scene.shapes) {
        if (s.kind != t.kind) {
          ref = &s;
          break;
        }
      }
      // A rival is another same-kind shape that the description would also fit.
      bool unique = ref != nullptr;
      for (std::size_t i = 0; i < scene.shapes.size() && unique; ++i) {
        const auto& s = scene.shapes[i];
        if (i == scene.target || s.kind != t.kind) continue;
        if (quadrant_of(s, scene.width, scene.height) == q &&
            std::string(relation_word(s, *ref)) == relation_word(t, *ref)) {
          unique = false;
        }
      }
      d.text = std::string("the ") + to_string(t.kind) + " in the " + quadrant_words(q) + " quadrant";
      if (unique) {
        d.text += std::string(" ") + relation_word(t, *ref) + " of the " + to_string(ref->kind);
      } else {
        d.fallback = true;
      }
      break;
    }
  }
  d.tokens = vocab.encode(d.text);
  for (std::size_t id : d.tokens) {
    if (id == Vocabulary::kUnk) throw InputError("describe: vocabulary does not cover '" + d.text + "'");
  }
  return d;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  if (img.pixels.size() != img.width * img.height) throw InputError("write_pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write_pgm: write failed for " + path.string());
}

GrayImage parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 1u << 20) throw ParseError(std::string("pgm: ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw ParseError(std::string("pgm: expected ") + what, pos);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("pgm: missing P5 magic", 0);
  pos = 2;
  GrayImage img;
  img.width = read_uint("width");
  img.height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) throw ParseError("pgm: maxval must be 255, got " + std::to_string(maxval), pos);
  if (pos >= bytes.size() || !is_space(bytes[pos])) throw ParseError("pgm: expected whitespace after maxval", pos);
  ++pos;
  const std::size_t n = img.width * img.height;
  if (img.width == 0 || img.height == 0) throw ParseError("pgm: empty image", pos);
  if (bytes.size() - pos != n) {
    throw ParseError("pgm: expected " + std::to_string(n) + " pixel bytes, found " + std::to_string(bytes.size() - pos),
                     pos);
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  try {
    return parse_pgm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset);
  }
}

GrayImage to_gray(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 1) throw ShapeError("to_gray: expected [H, W, 1], got " + tgfuse::to_string(image.shape()));
  GrayImage g{image.dim(1), image.dim(0), std::vector<std::uint8_t>(image.size())};
  const auto v = image.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) throw InputError("to_gray: value outside [0, 1]");
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(v[i] * 255.0));
  }
  return g;
}

GrayImage to_gray(const metrics::BinaryMask& mask) {
  GrayImage g{mask.width(), mask.height(), std::vector<std::uint8_t>(mask.bits().size())};
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = mask.bits()[i] ? 255 : 0;
  return g;
}

Tensor gray_to_tensor(const GrayImage& img) {
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return Tensor({img.height, img.width, 1}, std::move(v));
}

metrics::BinaryMask gray_to_mask(const GrayImage& img) {
  std::vector<std::uint8_t> bits(img.pixels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (img.pixels[i] != 0 && img.pixels[i] != 255) {
      throw InputError("mask pixel " + std::to_string(i) + " has value " + std::to_string(img.pixels[i]) +
                       " (expected 0 or 255)");
    }
    bits[i] = img.pixels[i] ? 1 : 0;
  }
  return metrics::BinaryMask(img.width, img.height, std::move(bits));
}

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InputError("unknown split '" + s + "' (expected train|val|test)");
}

std::uint64_t split_offset(Split split) {
  switch (split) {
    case Split::Train: return 0;
    case Split::Val: return 1'000'000;
    case Split::Test: return 2'000'000;
  }
  return 0;
}

namespace {

Tensor mask_tensor(const metrics::BinaryMask& m) {
  std::vector<double> v(m.bits().begin(), m.bits().end());
  return Tensor({m.height(), m.width()}, std::move(v));
}

std::string join_tokens(const TokenIds& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

constexpr const char* kManifestHeader =
    "sample_id,seed,image,mask,bbox_x1,bbox_y1,bbox_x2,bbox_y2,level,description,token_ids,scene,fallback";

}  // namespace

Sample make_sample(std::uint64_t seed, const std::string& id, DescriptionLevel level, const SceneConfig& cfg) {
  Sample s;
  s.id = id;
  s.seed = seed;
  s.scene = generate_scene(seed, cfg);
  Rendered r = render(s.scene);
  s.image = r.image;
  s.mask = mask_tensor(r.mask);
  s.bbox = r.bbox;
  const Description d = describe(s.scene, level);
  s.tokens = d.tokens;
  s.description = d.text;
  s.fallback = d.fallback;
  return s;
}

std::filesystem::path build_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  if (spec.count == 0) throw ConfigError("build_dataset: count must be at least 1");
  spec.scene.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  std::filesystem::create_directories(dir / "masks", ec);
  if (ec) throw IoError("build_dataset: cannot create " + dir.string() + ": " + ec.message());

  const auto manifest = dir / "manifest.csv";
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw IoError("build_dataset: cannot write " + manifest.string());
  out << kManifestHeader << '\n';
  const std::uint64_t base = spec.seed + split_offset(spec.split);
  for (std::size_t i = 0; i < spec.count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05zu", to_string(spec.split), i);
    const Sample s = make_sample(base + i, id, spec.level, spec.scene);
    const std::string image_rel = std::string("images/") + id + ".pgm";
    const std::string mask_rel = std::string("masks/") + id + ".pgm";
    write_pgm(to_gray(s.image), dir / image_rel);
    write_pgm(to_gray(render(s.scene).mask), dir / mask_rel);
    out << s.id << ',' << s.seed << ',' << image_rel << ',' << mask_rel;
    for (double b : s.bbox) out << ',' << text::format_double(b);
    out << ',' << to_string(spec.level) << ',' << s.description << ',' << join_tokens(s.tokens) << ','
        << s.scene.serialize() << ',' << (s.fallback ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("build_dataset: write failed for " + manifest.string());
  return manifest;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open " + manifest.string());
  const auto root = manifest.parent_path();
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kManifestHeader) {
    throw InputError("load_dataset: unexpected header in " + manifest.string());
  }
  std::vector<Sample> samples;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    const std::string where = manifest.string() + " row " + std::to_string(row);
    if (f.size() != 13) throw InputError(where + ": expected 13 fields, got " + std::to_string(f.size()));
    Sample s;
    s.id = f[0];
    s.seed = text::parse_size(f[1], where + " seed");
    s.image = gray_to_tensor(read_pgm(root / f[2]));
    const auto mask = gray_to_mask(read_pgm(root / f[3]));
    s.mask = mask_tensor(mask);
    for (std::size_t k = 0; k < 4; ++k) s.bbox[k] = text::parse_double(f[4 + k], where + " bbox");
    s.description = f[9];
    for (const auto& tok : text::split(f[10], ' ')) {
      if (!text::trim(tok).empty()) s.tokens.push_back(text::parse_size(tok, where + " token_ids"));
    }
    s.scene = SceneSpec::parse(f[11]);
    s.fallback = f[12] == "1";
    samples.push_back(std::move(s));
  }
  return samples;
}

void relabel(std::vector<Sample>& samples, DescriptionLevel level) {
  for (auto& s : samples) {
    const Description d = describe(s.scene, level);
    s.tokens = d.tokens;
    s.description = d.text;
    s.fallback = d.fallback;
  }
}

Sample hflip(const Sample& s) {
  Sample out = s;
  const std::size_t h = s.image.dim(0), w = s.image.dim(1);
  std::vector<double> img(s.image.size()), mask(s.mask.size());
  const auto iv = s.image.data();
  const auto mv = s.mask.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      img[y * w + x] = iv[y * w + (w - 1 - x)];
      mask[y * w + x] = mv[y * w + (w - 1 - x)];
    }
  }
  out.image = Tensor(s.image.shape(), std::move(img));
  out.mask = Tensor(s.mask.shape(), std::move(mask));
  out.bbox = {1.0 - s.bbox[2], s.bbox[1], 1.0 - s.bbox[0], s.bbox[3]};
  for (auto& shape : out.scene.shapes) shape.cx = static_cast<std::int64_t>(w) - 1 - shape.cx;
  return out;
}

Sample dihedral(const Sample& s, unsigned t, DescriptionLevel level) {
  if (t > 7) throw InputError("dihedral: transform index must be in [0, 7]");
  const std::size_t h = s.image.dim(0), w = s.image.dim(1);
  if (h != w) throw ShapeError("dihedral: image must be square");
  const bool transpose = t & 4u, flip_x = t & 1u, flip_y = t & 2u;
  const std::size_t n = w;
  auto source = [&](std::size_t x, std::size_t y) {
    // Output (x, y) reads the input pixel that the transform moves there.
    if (flip_x) x = n - 1 - x;
    if (flip_y) y = n - 1 - y;
    if (transpose) std::swap(x, y);
    return y * n + x;
  };
  std::vector<double> img(s.image.size()), mask(s.mask.size());
  const auto iv = s.image.data();
  const auto mv = s.mask.data();
  std::vector<std::uint8_t> bits(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t src = source(x, y);
      img[y * n + x] = iv[src];
      mask[y * n + x] = mv[src];
      bits[y * n + x] = mv[src] != 0.0 ? 1 : 0;
    }
  }
  Sample out = s;
  out.image = Tensor(s.image.shape(), std::move(img));
  out.mask = Tensor(s.mask.shape(), std::move(mask));
  out.bbox = tight_bbox(metrics::BinaryMask(n, n, std::move(bits)));
  const auto last = static_cast<std::int64_t>(n) - 1;
  for (auto& shape : out.scene.shapes) {
    if (transpose) std::swap(shape.cx, shape.cy);
    if (flip_x) shape.cx = last - shape.cx;
    if (flip_y) shape.cy = last - shape.cy;
  }
  const Description d = describe(out.scene, level);
  out.tokens = d.tokens;
  out.description = d.text;
  out.fallback = d.fallback;
  return out;
}

}  // namespace tgfuse::synth
