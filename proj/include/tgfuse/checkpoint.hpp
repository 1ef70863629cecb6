#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tgfuse/config.hpp"
#include "tgfuse/model.hpp"

namespace tgfuse {

/// Little-endian binary layout:
///   "TGLM" | u32 version | u32 n | n bytes of [model] config text | u32 count |
///   count x (u32 name_len | name | u32 rank | rank x u64 dim | f64 values)
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string model_config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const TgModel& model);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every tensor into the parameter of the same name. Missing, extra or
/// mis-shaped tensors raise ConfigError naming them.
void load_weights(TgModel& model, const Checkpoint& ckpt);

/// Model section parsed from the checkpoint, combined with defaults elsewhere.
ModelConfig checkpoint_model_config(const Checkpoint& ckpt);

std::unique_ptr<TgModel> load_model(const std::filesystem::path& path);

}  // namespace tgfuse
