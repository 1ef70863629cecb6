#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgfuse/encoders.hpp"
#include "tgfuse/metrics.hpp"
#include "tgfuse/tensor.hpp"

namespace tgfuse::synth {

struct GenerationError : std::runtime_error {
  GenerationError(const std::string& what, std::uint64_t seed)
      : std::runtime_error(what + " (seed " + std::to_string(seed) + ")"), seed(seed) {}
  std::uint64_t seed;
};

enum class ShapeKind { Disk, Square, Triangle };
const char* to_string(ShapeKind kind);
ShapeKind parse_shape_kind(const std::string& s);

enum class DescriptionLevel { None, Simple, Complex };
const char* to_string(DescriptionLevel level);
DescriptionLevel parse_level(const std::string& s);

/// Integer-centred shape. Every kind occupies the box [cx-s, cx+s] x [cy-s, cy+s]:
///   disk      (x-cx)^2 + (y-cy)^2 <= s^2
///   square    |x-cx| <= s and |y-cy| <= s
///   triangle  apex at (cx, cy-s), base row cy+s, 2|x-cx| <= y-(cy-s)
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Disk;
  std::int64_t cx = 0, cy = 0, size = 0;
  int level = 255;  // intensity level/255

  bool covers(std::int64_t x, std::int64_t y) const;
  double intensity() const { return level / 255.0; }
  friend bool operator==(const ShapeSpec&, const ShapeSpec&) = default;
};

struct SceneSpec {
  std::size_t width = 64, height = 64;
  std::vector<ShapeSpec> shapes;
  std::size_t target = 0;

  /// "W:H:target|kind:cx:cy:s:level;..." for manifests.
  std::string serialize() const;
  static SceneSpec parse(const std::string& text);
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct SceneConfig {
  std::size_t canvas = 64;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 3;
  std::int64_t min_size = 5;
  std::int64_t max_size = 9;
  std::int64_t gap = 2;          // empty pixels between shape boxes
  std::int64_t margin = 1;       // empty pixels at the canvas border
  std::int64_t midline_gap = 4;  // min |center - midline| on each axis
  int min_level = 128;
  /// Ambiguous scenes hold two shapes of the target's kind in different
  /// quadrants plus at least one shape of another kind.
  bool ambiguous = false;
  std::size_t max_attempts = 1000;

  void validate() const;
};

SceneSpec generate_scene(std::uint64_t seed, const SceneConfig& cfg);

struct Rendered {
  Tensor image;               // [H, W, 1]
  metrics::BinaryMask mask;   // target only
  std::array<double, 4> bbox{};  // (x1, y1, x2, y2) in [0, 1]
};

Rendered render(const SceneSpec& scene);

/// Tight box of a mask, normalized: (min_x/W, min_y/H, (max_x+1)/W, (max_y+1)/H).
std::array<double, 4> tight_bbox(const metrics::BinaryMask& mask);

/// The closed grammar vocabulary.
const Vocabulary& grammar_vocabulary();

enum class Quadrant { UpperLeft, UpperRight, LowerLeft, LowerRight };
Quadrant quadrant_of(const ShapeSpec& shape, std::size_t width, std::size_t height);

struct Description {
  std::string text;
  TokenIds tokens;
  /// Complex level only: the full template would not single out the target, so
  /// the quadrant-only form was used.
  bool fallback = false;
};

/// None:    [SOS EOS]
/// Simple:  [SOS kind EOS]
/// Complex: [SOS the kind in the <upper|lower> <left|right> quadrant
///           <left|right|above|below> of the <other-kind> EOS]
Description describe(const SceneSpec& scene, DescriptionLevel level,
                     const Vocabulary& vocab = grammar_vocabulary());

/// 8-bit grayscale grid.
struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary P5 with maxval 255 and header "P5\n<W> <H>\n255\n".
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
GrayImage parse_pgm(const std::string& bytes);

/// Values in [0, 1] rounded to level/255.
GrayImage to_gray(const Tensor& image);
GrayImage to_gray(const metrics::BinaryMask& mask);
Tensor gray_to_tensor(const GrayImage& img);
metrics::BinaryMask gray_to_mask(const GrayImage& img);

enum class Split { Train, Val, Test };
const char* to_string(Split split);
Split parse_split(const std::string& s);
/// Base of the per-sample seeds: sample i of a split uses base + offset(split) + i.
std::uint64_t split_offset(Split split);

struct DatasetSpec {
  std::uint64_t seed = 7;
  std::size_t count = 16;
  Split split = Split::Train;
  DescriptionLevel level = DescriptionLevel::Complex;
  SceneConfig scene;
};

struct Sample {
  std::string id;
  std::uint64_t seed = 0;
  SceneSpec scene;
  Tensor image;  // [H, W, 1]
  Tensor mask;   // [H, W] of 0/1
  std::array<double, 4> bbox{};
  TokenIds tokens;
  std::string description;
  bool fallback = false;
};

Sample make_sample(std::uint64_t seed, const std::string& id, DescriptionLevel level,
                   const SceneConfig& cfg);

/// Writes images/<id>.pgm, masks/<id>.pgm and manifest.csv under `dir`.
/// Returns the manifest path.
std::filesystem::path build_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

/// Reads a manifest. Paths in it are relative to the manifest directory.
std::vector<Sample> load_dataset(const std::filesystem::path& manifest);

/// Re-describes every sample at `level` from its stored scene.
void relabel(std::vector<Sample>& samples, DescriptionLevel level);

/// Mirrors image, mask and box left-right. Tokens are left untouched.
Sample hflip(const Sample& s);

/// Element `t` (0..7) of the square's symmetry group: transpose when bit 2 is
/// set, then mirror left-right (bit 0) and top-bottom (bit 1). Shape centres in
/// the scene follow the pixels and the description is regenerated at `level`
/// from the moved scene, so spatial words stay truthful.
Sample dihedral(const Sample& s, unsigned t, DescriptionLevel level);

}  // namespace tgfuse::synth
