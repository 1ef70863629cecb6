#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "tgfuse/gradcheck.hpp"
#include "tgfuse/harness.hpp"

namespace fs = std::filesystem;
using namespace tgfuse;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string level;
  bool freeze = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool training) {
  cmd->add_option("--config", c.config, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the seed");
  cmd->add_option("--level", c.level, "Description level")->check(CLI::IsMember({"none", "simple", "complex"}));
  cmd->add_option("--out", c.out, "Output directory");
  if (training) cmd->add_flag("--freeze-encoders", c.freeze, "Train only the mixer and decoder");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (!c.level.empty()) cfg.train.level = synth::parse_level(c.level);
  if (c.freeze) cfg.train.freeze_encoders = true;
  if (!c.out.empty()) cfg.paths.out_dir = c.out;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const InputError*>(&e)) return "input";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  if (dynamic_cast<const synth::GenerationError*>(&e)) return "generation";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided shape segmentation: data, training, evaluation and statistics"};
  app.require_subcommand(1);

  Common gen_opts;
  bool gen_ambiguous = false;
  auto* gen = app.add_subcommand("gen", "Generate train/val/test splits");
  add_common(gen, gen_opts, false);
  gen->add_flag("--ambiguous", gen_ambiguous, "Scenes with duplicate shape kinds");

  Common train_opts;
  std::string train_data;
  std::optional<std::size_t> train_epochs;
  auto* train = app.add_subcommand("train", "Train a model and evaluate it on the test split");
  add_common(train, train_opts, true);
  train->add_option("--data", train_data, "Dataset directory (default: paths.data_dir)");
  train->add_option("--epochs", train_epochs, "Override train.epochs");

  std::string eval_ckpt, eval_manifest, eval_out, eval_level, eval_config;
  bool eval_oracle = false;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a manifest");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->check(CLI::ExistingFile);
  eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--level", eval_level, "Description level")->check(CLI::IsMember({"none", "simple", "complex"}));
  eval->add_option("--config", eval_config, "Check the checkpoint against this config")->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_flag("--oracle", eval_oracle, "Score ground truth against itself");

  Common ablate_opts;
  std::string ablate_data;
  auto* ablate = app.add_subcommand("ablate", "Train and score none/simple/complex description levels");
  add_common(ablate, ablate_opts, true);
  ablate->add_option("--data", ablate_data, "Ambiguous dataset directory (generated when missing)");

  std::string cmp_a, cmp_b, cmp_out;
  auto* compare = app.add_subcommand("compare", "Wilcoxon signed-rank comparison of two reports");
  compare->add_option("report_a", cmp_a, "First report CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("report_b", cmp_b, "Second report CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", cmp_out, "Write the table to this CSV file");

  GradcheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the tiny end-to-end model");
  grad->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  grad->add_option("--step", gc.step, "Central difference step");
  grad->add_option("--stencil", gc.stencil, "Central stencil points (2 or 4)");
  grad->add_option("--lambda-bbox", gc.lambda_bbox, "Weight of the box loss");
  grad->add_option("--seed", gc.seed, "Fixture seed");
  grad->add_option("--corrupt-op", gc.corrupt_op, "")->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      RunConfig cfg = resolve(gen_opts);
      if (gen_opts.seed) cfg.data.seed = *gen_opts.seed;
      if (gen_ambiguous) cfg.data.ambiguous = true;
      const fs::path dir = gen_opts.out.empty() ? fs::path(cfg.paths.data_dir) : fs::path(gen_opts.out);
      const DataPaths paths = generate_datasets(cfg, dir);
      std::cout << "wrote " << paths.train.string() << "\n"
                << "wrote " << paths.val.string() << "\n"
                << "wrote " << paths.test.string() << "\n";
    } else if (*train) {
      RunConfig cfg = resolve(train_opts);
      if (train_opts.seed) cfg.train.seed = *train_opts.seed;
      if (train_epochs) cfg.train.epochs = *train_epochs;
      cfg.validate();
      const DataPaths data = data_paths(train_data.empty() ? fs::path(cfg.paths.data_dir) : fs::path(train_data));
      const fs::path out = cfg.paths.out_dir;
      ensure_dir(out);
      const RunResult run = train_and_evaluate(cfg, data, out, &std::cerr);
      std::cout << "best epoch " << run.training.best_epoch << " (val DSC " << run.training.best_val_dsc << ")\n"
                << metrics::format_summary(run.report);
    } else if (*eval) {
      const auto level = eval_level.empty() ? synth::DescriptionLevel::Complex : synth::parse_level(eval_level);
      auto samples = synth::load_dataset(eval_manifest);
      if (!eval_level.empty()) synth::relabel(samples, level);
      metrics::MetricsReport report;
      if (eval_oracle) {
        report = evaluate_oracle(samples);
      } else {
        if (eval_ckpt.empty()) throw ConfigError("eval: --checkpoint is required unless --oracle is given");
        const Checkpoint ck = read_checkpoint(eval_ckpt);
        if (!eval_config.empty()) {
          const auto diff = model_differences(RunConfig::load(eval_config).model_config(), checkpoint_model_config(ck));
          if (!diff.empty()) {
            std::string msg = "checkpoint model differs from config:";
            for (const auto& d : diff) msg += " " + d;
            throw ConfigError(msg);
          }
        }
        TgModel model(checkpoint_model_config(ck));
        load_weights(model, ck);
        report = evaluate(model, samples, worker_count());
      }
      ensure_dir(eval_out);
      metrics::write_report_csv(report, fs::path(eval_out) / "report.csv");
      write_text(fs::path(eval_out) / "summary.txt", metrics::format_summary(report));
      std::cout << metrics::format_summary(report);
    } else if (*ablate) {
      RunConfig cfg = resolve(ablate_opts);
      if (ablate_opts.seed) cfg.train.seed = *ablate_opts.seed;
      cfg.data.ambiguous = true;
      cfg.validate();
      const fs::path out = cfg.paths.out_dir;
      ensure_dir(out);
      const fs::path data_dir = ablate_data.empty() ? out / "data" : fs::path(ablate_data);
      DataPaths data = data_paths(data_dir);
      if (!fs::exists(data.train) || !fs::exists(data.val) || !fs::exists(data.test)) {
        data = generate_datasets(cfg, data_dir);
      }
      const auto rows = run_ablation(cfg, data, out, &std::cerr);
      write_text(out / "ablation.txt", format_ablation_table(rows));
      std::cout << format_ablation_table(rows);
    } else if (*compare) {
      const auto rows = metrics::compare_reports(metrics::read_report_csv(cmp_a), metrics::read_report_csv(cmp_b));
      const std::string csv = metrics::format_comparison_csv(rows);
      if (!cmp_out.empty()) write_text(cmp_out, csv);
      std::cout << csv;
    } else if (*grad) {
      const GradcheckReport rep = gradcheck_tiny(gc);
      std::cout << format_gradcheck(rep, gc.tolerance);
      return rep.passed ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << error_kind(e) << ": " << msg << "\n";
    return 1;
  }
  return 0;
}
