#include "tgfuse/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <thread>

#include "text_util.hpp"

namespace tgfuse {

DataPaths data_paths(const std::filesystem::path& data_dir) {
  return {data_dir / "train" / "manifest.csv", data_dir / "val" / "manifest.csv",
          data_dir / "test" / "manifest.csv"};
}

DataPaths generate_datasets(const RunConfig& cfg, const std::filesystem::path& data_dir) {
  cfg.validate();
  synth::DatasetSpec spec;
  spec.seed = cfg.data.seed;
  spec.level = cfg.train.level;
  spec.scene = cfg.data.scene(cfg.model.image_size);
  DataPaths out;
  spec.split = synth::Split::Train;
  spec.count = cfg.data.train_count;
  out.train = synth::build_dataset(data_dir / "train", spec);
  spec.split = synth::Split::Val;
  spec.count = cfg.data.val_count;
  out.val = synth::build_dataset(data_dir / "val", spec);
  spec.split = synth::Split::Test;
  spec.count = cfg.data.test_count;
  out.test = synth::build_dataset(data_dir / "test", spec);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

Tensor bbox_tensor(const synth::Sample& s) { return Tensor({4}, {s.bbox[0], s.bbox[1], s.bbox[2], s.bbox[3]}); }

void check_sample(const TgModel& model, const synth::Sample& s) {
  const auto n = model.config().image_size;
  if (s.image.shape() != Shape{n, n, 1}) {
    throw InputError("sample " + s.id + ": image " + to_string(s.image.shape()) + " does not match model input " +
                     std::to_string(n) + "x" + std::to_string(n));
  }
}

Tensor loss_target(const TgModel& model, const synth::Sample& s, const Prediction& pred) {
  if (pred.mask_probs.shape() == s.mask.shape()) return s.mask;
  (void)model;
  throw ShapeError("sample " + s.id + ": prediction " + to_string(pred.mask_probs.shape()) + " vs mask " +
                   to_string(s.mask.shape()) + " (enable model.resize_to_input)");
}

}  // namespace

LossBreakdown sample_loss(const TgModel& model, const synth::Sample& sample, double lambda_bbox) {
  check_sample(model, sample);
  Context ctx;
  const Prediction pred = model.forward(ctx, sample.image, sample.tokens);
  return total_loss(pred, loss_target(model, sample, pred), bbox_tensor(sample), lambda_bbox);
}

std::string format_train_log(const std::vector<EpochRecord>& epochs) {
  std::string out = "epoch,steps,lr,bce,dice,bbox,total,val_dsc\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + std::to_string(e.steps) + "," + text::format_double(e.lr) + "," +
           text::format_double(e.bce) + "," + text::format_double(e.dice) + "," + text::format_double(e.bbox) + "," +
           text::format_double(e.total) + "," + text::format_double(e.val_dsc) + "\n";
  }
  return out;
}

TrainReport train_model(const RunConfig& cfg, TgModel& model, const std::vector<synth::Sample>& train,
                        const std::vector<synth::Sample>& val, const std::filesystem::path& out_dir,
                        std::ostream* progress) {
  cfg.validate();
  if (train.empty()) throw InputError("train_model: empty training set");
  if (val.empty()) throw InputError("train_model: empty validation set");
  for (const auto& s : train) check_sample(model, s);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("train_model: cannot create " + out_dir.string() + ": " + ec.message());

  model.set_encoders_frozen(cfg.train.freeze_encoders);
  const auto& params = model.parameters();
  const std::size_t batch = cfg.train.batch_size;
  const std::size_t steps_per_epoch = (train.size() + batch - 1) / batch;
  AdamWConfig optim = cfg.optim;
  optim.total_steps = steps_per_epoch * cfg.train.epochs;
  OptimizerState state(optim);
  const Augment augment = cfg.train.augment == Augment::HFlip && cfg.train.level == synth::DescriptionLevel::Complex
                              ? Augment::None
                              : cfg.train.augment;
  const double lambda = cfg.train.lambda_bbox;

  Rng rng(cfg.train.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train.size());
  TrainReport report;
  report.best_checkpoint = out_dir / "best.ckpt";
  report.last_checkpoint = out_dir / "last.ckpt";
  std::string timing = "epoch,seconds\n";

  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double sum_bce = 0.0, sum_dice = 0.0, sum_bbox = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const synth::Sample& base = train[order[b]];
        synth::Sample moved;
        bool use_moved = false;
        if (augment == Augment::HFlip && rng.below(2) == 1) {
          moved = synth::hflip(base);
          use_moved = true;
        } else if (augment == Augment::Dihedral) {
          const auto t = static_cast<unsigned>(rng.below(8));
          if (t != 0) {
            moved = synth::dihedral(base, t, cfg.train.level);
            use_moved = true;
          }
        }
        const synth::Sample& s = use_moved ? moved : base;
        Tape tape;
        Context ctx(tape);
        const Prediction pred = model.forward(ctx, s.image, s.tokens);
        const LossBreakdown loss = total_loss(pred, s.mask, bbox_tensor(s), lambda);
        const double total = loss.total.item();
        if (!std::isfinite(total)) {
          throw TrainingError("non-finite loss on sample " + s.id, state.step + 1);
        }
        sum_bce += loss.bce.item();
        sum_dice += loss.dice.item();
        sum_bbox += loss.bbox.item();
        tape.backward(loss.total, weight);
      }
      adamw_step(params, state);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = state.step;
    rec.lr = state.last_lr;
    const double n = static_cast<double>(train.size());
    rec.bce = sum_bce / n;
    rec.dice = sum_dice / n;
    rec.bbox = sum_bbox / n;
    rec.total = rec.bce + rec.dice + lambda * rec.bbox;
    rec.val_dsc = evaluate(model, val, 1).dsc().mean;
    report.epochs.push_back(rec);
    if (rec.val_dsc > report.best_val_dsc) {
      report.best_val_dsc = rec.val_dsc;
      report.best_epoch = epoch;
      save_checkpoint(report.best_checkpoint, cfg, model);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timing += std::to_string(epoch) + "," + text::format_fixed(secs, 3) + "\n";
    if (progress) {
      *progress << "epoch " << epoch << "/" << cfg.train.epochs << " loss " << text::format_fixed(rec.total, 4)
                << " (bce " << text::format_fixed(rec.bce, 4) << ", dice " << text::format_fixed(rec.dice, 4)
                << ") val_dsc " << text::format_fixed(rec.val_dsc, 4) << " lr " << rec.lr << " ["
                << text::format_fixed(secs, 1) << "s]\n"
                << std::flush;
    }
  }
  save_checkpoint(report.last_checkpoint, cfg, model);
  write_text(out_dir / "train_log.csv", format_train_log(report.epochs));
  write_text(out_dir / "timing.csv", timing);
  write_text(out_dir / "config.ini", cfg.serialize());
  return report;
}

std::size_t worker_count() {
  const char* env = std::getenv("TGFUSE_THREADS");
  if (!env || !*env) return 1;
  try {
    const std::size_t n = text::parse_size(env, "TGFUSE_THREADS");
    return std::clamp<std::size_t>(n, 1, 256);
  } catch (const InputError&) {
    throw ConfigError(std::string("TGFUSE_THREADS must be a positive integer, got '") + env + "'");
  }
}

metrics::MetricsReport evaluate(const TgModel& model, const std::vector<synth::Sample>& samples,
                                std::size_t threads) {
  for (const auto& s : samples) check_sample(model, s);
  metrics::MetricsReport report;
  report.samples.resize(samples.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      const auto& s = samples[i];
      Context ctx;
      const Prediction pred = model.forward(ctx, s.image, s.tokens);
      const auto gt = binarize(loss_target(model, s, pred), 0.5);
      report.samples[i] = metrics::evaluate_pair(s.id, gt, binarize(pred.mask_probs, 0.5));
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(samples.size(), 1));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  return report;
}

metrics::MetricsReport evaluate_oracle(const std::vector<synth::Sample>& samples) {
  metrics::MetricsReport report;
  for (const auto& s : samples) {
    const auto gt = binarize(s.mask, 0.5);
    report.samples.push_back(metrics::evaluate_pair(s.id, gt, gt));
  }
  return report;
}

RunResult train_and_evaluate(const RunConfig& cfg, const DataPaths& data, const std::filesystem::path& out_dir,
                             std::ostream* progress) {
  auto load = [&](const std::filesystem::path& manifest) {
    auto samples = synth::load_dataset(manifest);
    synth::relabel(samples, cfg.train.level);
    return samples;
  };
  const auto train = load(data.train), val = load(data.val), test = load(data.test);
  TgModel model(cfg.model_config());
  RunResult out;
  out.training = train_model(cfg, model, train, val, out_dir, progress);
  const auto best = load_model(out.training.best_checkpoint);
  out.report = evaluate(*best, test, worker_count());
  metrics::write_report_csv(out.report, out_dir / "report.csv");
  write_text(out_dir / "summary.txt", metrics::format_summary(out.report));
  return out;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const DataPaths& data,
                                      const std::filesystem::path& out_dir, std::ostream* progress) {
  std::vector<AblationRow> rows;
  for (auto level : {synth::DescriptionLevel::None, synth::DescriptionLevel::Simple,
                     synth::DescriptionLevel::Complex}) {
    RunConfig run = cfg;
    run.train.level = level;
    if (progress) *progress << "== level " << synth::to_string(level) << " ==\n";
    RunResult r = train_and_evaluate(run, data, out_dir / synth::to_string(level), progress);
    rows.push_back({level, std::move(r.report), std::move(r.training)});
  }
  write_text(out_dir / "ablation.csv", format_ablation_csv(rows));
  return rows;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "level,dsc_mean,dsc_std,hd95_mean,hd95_std,asd_mean,asd_std,undefined\n";
  for (const auto& r : rows) {
    const auto d = r.report.dsc(), h = r.report.hd95(), a = r.report.asd();
    out += std::string(synth::to_string(r.level)) + "," + text::format_double(d.mean) + "," +
           text::format_double(d.stddev) + "," + text::format_double(h.mean) + "," + text::format_double(h.stddev) +
           "," + text::format_double(a.mean) + "," + text::format_double(a.stddev) + "," +
           std::to_string(r.report.undefined_count()) + "\n";
  }
  return out;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "description  DSC            HD95           ASD\n";
  for (const auto& r : rows) {
    const auto d = r.report.dsc(), h = r.report.hd95(), a = r.report.asd();
    std::string name = synth::to_string(r.level);
    name.resize(13, ' ');
    auto cell = [](const metrics::Summary& s, int digits) {
      std::string c = text::format_fixed(s.mean, digits) + "±" + text::format_fixed(s.stddev, digits);
      // '±' is two bytes in UTF-8 but one column on screen.
      while (c.size() < 16) c += ' ';
      return c;
    };
    out += name + cell(d, 3) + cell(h, 2) + cell(a, 2) + "\n";
  }
  return out;
}

}  // namespace tgfuse
