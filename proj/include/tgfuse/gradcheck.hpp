#pragma once

#include <string>
#include <vector>

#include "tgfuse/model.hpp"

namespace tgfuse {

struct GradcheckOptions {
  /// Central stencil: 2 points (O(h^2)) or 4 points (O(h^4)).
  int stencil = 4;
  double step = 1e-4;
  double tolerance = 1e-4;
  double lambda_bbox = 0.0;
  std::uint64_t seed = 3;
  /// Test hook forwarded to debug::inject_backward_fault.
  std::string corrupt_op;
  double corrupt_factor = 1.5;
};

struct GradcheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct ModuleError {
  std::string module;  // image, text, mixer, decoder
  std::size_t checked = 0;
  GradcheckEntry worst;
};

struct GradcheckReport {
  std::size_t checked = 0;
  GradcheckEntry worst;
  std::vector<ModuleError> modules;
  double seconds = 0.0;
  bool passed = false;
};

/// The tiny end-to-end configuration: d = 8, 2 x 2 token grid, 4 text
/// positions, four mixer blocks.
ModelConfig tiny_model_config();

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Compares backprop gradients of BCE + Dice (+ bbox) with central finite
/// differences for every scalar parameter of `model`.
GradcheckReport gradcheck(TgModel& model, const GradcheckOptions& opts);

/// Builds the tiny model and checks it.
GradcheckReport gradcheck_tiny(const GradcheckOptions& opts);

std::string format_gradcheck(const GradcheckReport& report, double tolerance);

}  // namespace tgfuse
