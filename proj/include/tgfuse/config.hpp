#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tgfuse/model.hpp"
#include "tgfuse/optim.hpp"
#include "tgfuse/synth.hpp"

namespace tgfuse {

/// Training-time geometric augmentation, drawn per sample visit.
///   none      no augmentation
///   hflip     random left-right mirror with the text untouched; skipped for
///             complex descriptions, whose left/right words it would contradict
///   dihedral  one of the 8 square symmetries with the description regenerated
///             from the moved scene
enum class Augment { None, HFlip, Dihedral };
const char* to_string(Augment a);
Augment parse_augment(const std::string& s);

struct TrainSettings {
  std::size_t batch_size = 16;
  std::size_t epochs = 200;
  std::uint64_t seed = 7;
  synth::DescriptionLevel level = synth::DescriptionLevel::Complex;
  bool freeze_encoders = false;
  double lambda_bbox = 0.0;
  Augment augment = Augment::HFlip;
};

struct DataSettings {
  std::uint64_t seed = 7;
  std::size_t train_count = 512;
  std::size_t val_count = 64;
  std::size_t test_count = 128;
  bool ambiguous = false;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 3;

  synth::SceneConfig scene(std::size_t canvas) const;
};

struct PathSettings {
  std::string data_dir = "data/textshapes";
  std::string out_dir = "runs/default";
};

/// Sectioned key = value file: [model] [optim] [train] [data] [paths].
/// '#' and ';' start comments. Unknown sections or keys are rejected.
struct RunConfig {
  ModelConfig model;
  AdamWConfig optim;
  TrainSettings train;
  DataSettings data;
  PathSettings paths;

  void validate() const;
  /// The model section with the vocabulary size filled in.
  ModelConfig model_config() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  /// Only the [model] section.
  std::string serialize_model() const;
};

/// Names of [model] keys whose values differ.
std::vector<std::string> model_differences(const ModelConfig& a, const ModelConfig& b);

}  // namespace tgfuse
