#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgfuse/checkpoint.hpp"
#include "tgfuse/config.hpp"
#include "tgfuse/losses.hpp"
#include "tgfuse/metrics.hpp"
#include "tgfuse/synth.hpp"

namespace tgfuse {

/// Training stopped on a non-finite loss.
struct TrainingError : std::runtime_error {
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step(step) {}
  std::size_t step;
};

struct DataPaths {
  std::filesystem::path train, val, test;  // manifest files
};

DataPaths data_paths(const std::filesystem::path& data_dir);

/// Generates the train/val/test splits described by cfg.data under `data_dir`.
DataPaths generate_datasets(const RunConfig& cfg, const std::filesystem::path& data_dir);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // optimizer steps completed
  double lr = 0.0;        // learning rate of the epoch's last step
  double bce = 0.0, dice = 0.0, bbox = 0.0;
  double total = 0.0;     // bce + dice + lambda_bbox * bbox of the epoch means
  double val_dsc = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_dsc = -1.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

/// Loss of one sample under the model, for inspection.
LossBreakdown sample_loss(const TgModel& model, const synth::Sample& sample, double lambda_bbox);

/// AdamW training with per-step gradient averaging over the batch. Samples
/// are visited in a seeded shuffle; the run is a pure function of its inputs.
/// Writes best.ckpt, last.ckpt, train_log.csv and timing.csv under `out_dir`.
TrainReport train_model(const RunConfig& cfg, TgModel& model, const std::vector<synth::Sample>& train,
                        const std::vector<synth::Sample>& val, const std::filesystem::path& out_dir,
                        std::ostream* progress = nullptr);

/// Columns: epoch,steps,lr,bce,dice,bbox,total,val_dsc.
std::string format_train_log(const std::vector<EpochRecord>& epochs);

/// Worker count from TGFUSE_THREADS (default 1).
std::size_t worker_count();

/// Predicts, binarizes at 0.5 and scores every sample. Results keep the
/// sample order regardless of `threads`.
metrics::MetricsReport evaluate(const TgModel& model, const std::vector<synth::Sample>& samples,
                                std::size_t threads = 1);

/// Scores each ground-truth mask against itself.
metrics::MetricsReport evaluate_oracle(const std::vector<synth::Sample>& samples);

struct RunResult {
  TrainReport training;
  metrics::MetricsReport report;  // best checkpoint on the test split
};

/// Loads the three splits at cfg.train.level, trains a fresh model, scores
/// the best checkpoint on the test split and writes report.csv and
/// summary.txt next to the training outputs in `out_dir`.
RunResult train_and_evaluate(const RunConfig& cfg, const DataPaths& data, const std::filesystem::path& out_dir,
                             std::ostream* progress = nullptr);

struct AblationRow {
  synth::DescriptionLevel level = synth::DescriptionLevel::None;
  metrics::MetricsReport report;
  TrainReport training;
};

/// Trains and evaluates one model per description level on the same data and
/// seed. Per-level outputs go to out_dir/<level>/.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const DataPaths& data,
                                      const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

/// Columns: level,dsc_mean,dsc_std,hd95_mean,hd95_std,asd_mean,asd_std,undefined.
std::string format_ablation_csv(const std::vector<AblationRow>& rows);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace tgfuse
