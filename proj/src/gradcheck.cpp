#include "tgfuse/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "text_util.hpp"
#include "tgfuse/losses.hpp"

namespace tgfuse {

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.patch = 4;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.image_layers = 1;
  cfg.text_layers = 1;
  cfg.text_max_len = 4;
  cfg.mixer_depth = 4;
  cfg.ffn_mult = 2;
  cfg.decoder_hidden = 8;
  cfg.vocab_size = 8;
  cfg.init_seed = 11;
  return cfg;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

namespace {

struct Fixture {
  Tensor image, mask, bbox;
  TokenIds tokens;
};

Fixture make_fixture(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = cfg.image_size;
  std::vector<double> px(n * n * cfg.channels), m(n * n);
  for (auto& v : px) v = rng.uniform();
  // A filled rectangle gives the dice term a non-trivial target.
  for (std::size_t y = 1; y < n / 2 + 1; ++y) {
    for (std::size_t x = 2; x < n - 1; ++x) m[y * n + x] = 1.0;
  }
  Fixture f;
  f.image = Tensor({n, n, cfg.channels}, std::move(px));
  f.mask = Tensor({n, n}, std::move(m));
  f.bbox = Tensor({4}, {0.25, 0.125, 0.875, 0.625});
  f.tokens = {Vocabulary::kSos, Vocabulary::kReserved + 1, Vocabulary::kEos};
  return f;
}

std::string module_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

GradcheckReport gradcheck(TgModel& model, const GradcheckOptions& opts) {
  if (opts.stencil != 2 && opts.stencil != 4) throw ConfigError("gradcheck: stencil must be 2 or 4");
  if (!(opts.step > 0.0)) throw ConfigError("gradcheck: step must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const Fixture fx = make_fixture(model.config(), opts.seed);
  const auto& params = model.parameters();

  auto loss_value = [&] {
    Context ctx;
    const Prediction pred = model.forward(ctx, fx.image, fx.tokens);
    return total_loss(pred, fx.mask, fx.bbox, opts.lambda_bbox).total.item();
  };

  for (Parameter* p : params) p->zero_grad();
  if (!opts.corrupt_op.empty()) debug::inject_backward_fault(opts.corrupt_op, opts.corrupt_factor);
  try {
    Tape tape;
    Context ctx(tape);
    const Prediction pred = model.forward(ctx, fx.image, fx.tokens);
    tape.backward(total_loss(pred, fx.mask, fx.bbox, opts.lambda_bbox).total);
  } catch (...) {
    debug::inject_backward_fault("", 1.0);
    throw;
  }
  debug::inject_backward_fault("", 1.0);

  GradcheckReport report;
  report.worst.rel_error = -1.0;
  for (Parameter* p : params) {
    const std::string mod = module_of(p->name);
    auto it = std::find_if(report.modules.begin(), report.modules.end(),
                           [&](const ModuleError& m) { return m.module == mod; });
    if (it == report.modules.end()) {
      report.modules.push_back({mod, 0, {}});
      report.modules.back().worst.rel_error = -1.0;
      it = report.modules.end() - 1;
    }
    const Tensor original = p->value;
    std::vector<double> values = original.to_vector();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      auto at = [&](double offset) {
        values[i] = keep + offset;
        p->value = Tensor(original.shape(), values);
        return loss_value();
      };
      const double h = opts.step;
      const double numeric = opts.stencil == 2
                                 ? (at(h) - at(-h)) / (2.0 * h)
                                 : (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      values[i] = keep;

      GradcheckEntry e{p->name, i, p->grad[i], numeric, 0.0};
      e.rel_error = relative_error(e.analytic, e.numeric);
      ++report.checked;
      ++it->checked;
      if (e.rel_error > it->worst.rel_error) it->worst = e;
      if (e.rel_error > report.worst.rel_error) report.worst = e;
    }
    p->value = original;
  }
  report.passed = report.worst.rel_error < opts.tolerance;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

GradcheckReport gradcheck_tiny(const GradcheckOptions& opts) {
  TgModel model(tiny_model_config());
  return gradcheck(model, opts);
}

std::string format_gradcheck(const GradcheckReport& report, double tolerance) {
  std::string out = "module    params  worst_rel_err  worst_parameter\n";
  for (const auto& m : report.modules) {
    std::string name = m.module;
    name.resize(10, ' ');
    std::string count = std::to_string(m.checked);
    count.resize(8, ' ');
    char err[32];
    std::snprintf(err, sizeof err, "%-15.3e", m.worst.rel_error);
    out += name + count + err + m.worst.parameter + "[" + std::to_string(m.worst.index) + "]\n";
  }
  char line[256];
  std::snprintf(line, sizeof line, "max relative error %.3e over %zu parameters (tolerance %.0e, %.2fs): %s\n",
                report.worst.rel_error, report.checked, tolerance, report.seconds, report.passed ? "PASS" : "FAIL");
  out += line;
  if (!report.passed) {
    std::snprintf(line, sizeof line, "worst: %s[%zu] analytic %.10g numeric %.10g\n", report.worst.parameter.c_str(),
                  report.worst.index, report.worst.analytic, report.worst.numeric);
    out += line;
  }
  return out;
}

}  // namespace tgfuse
