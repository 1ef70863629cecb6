#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tgfuse/checkpoint.hpp"
#include "tgfuse/config.hpp"
#include "tgfuse/gradcheck.hpp"
#include "tgfuse/harness.hpp"

using namespace tgfuse;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tgfuse_harness_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.model.patch = 16;
  cfg.model.dim = 16;
  cfg.model.heads = 2;
  cfg.model.image_layers = 1;
  cfg.model.text_layers = 1;
  cfg.model.mixer_depth = 2;
  cfg.model.ffn_mult = 2;
  cfg.model.decoder_hidden = 16;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 4;
  cfg.optim.lr = 1e-3;
  cfg.data.train_count = 8;
  cfg.data.val_count = 4;
  cfg.data.test_count = 4;
  return cfg;
}

std::vector<synth::Sample> samples(const RunConfig& cfg, synth::Split split, std::size_t n) {
  std::vector<synth::Sample> out;
  const auto scene = cfg.data.scene(cfg.model.image_size);
  for (std::size_t i = 0; i < n; ++i) {
    const auto seed = cfg.data.seed + synth::split_offset(split) + i;
    out.push_back(synth::make_sample(seed, "s" + std::to_string(i), cfg.train.level, scene));
  }
  return out;
}

}  // namespace

TEST_CASE("run config round trip") {
  RunConfig cfg = small_config();
  cfg.optim.lr = 3.3e-4;
  cfg.train.level = synth::DescriptionLevel::Simple;
  cfg.train.augment = Augment::Dihedral;
  cfg.train.lambda_bbox = 0.25;
  cfg.data.ambiguous = true;
  cfg.data.min_shapes = 3;
  cfg.paths.out_dir = "runs/x";
  const RunConfig back = RunConfig::parse(cfg.serialize());
  CHECK(back.serialize() == cfg.serialize());
  CHECK(back.optim.lr == cfg.optim.lr);
  CHECK(back.train.augment == Augment::Dihedral);
  CHECK(model_differences(back.model, cfg.model).empty());
  const auto diffs = model_differences(back.model, RunConfig{}.model);
  REQUIRE(diffs.size() == 8);
  CHECK(diffs.front() == "model.patch (16 vs 8)");
}

TEST_CASE("run config rejects unknown or invalid entries") {
  CHECK_THROWS_AS(RunConfig::parse("[model]\ndepth = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[nope]\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("lr = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[model]\ndim = 63\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[train]\nlevel = verbose\n"), ConfigError);
  const RunConfig c = RunConfig::parse("# comment\n[optim]\nlr = 2e-4 ; inline\n[train]\nepochs = 3\n");
  CHECK(c.optim.lr == 2e-4);
  CHECK(c.train.epochs == 3);
  CHECK(c.model_config().vocab_size == synth::grammar_vocabulary().size());
}

TEST_CASE("checkpoint round trip") {
  const auto dir = scratch("ckpt");
  const RunConfig cfg = small_config();
  TgModel model(cfg.model_config());
  save_checkpoint(dir / "m.ckpt", cfg, model);
  const auto loaded = load_model(dir / "m.ckpt");
  REQUIRE(loaded->parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(loaded->parameters()[i]->name == model.parameters()[i]->name);
    CHECK(loaded->parameters()[i]->value.to_vector() == model.parameters()[i]->value.to_vector());
  }
  save_checkpoint(dir / "again.ckpt", cfg, *loaded);
  CHECK(slurp(dir / "m.ckpt") == slurp(dir / "again.ckpt"));

  ModelConfig other = cfg.model_config();
  other.dim = 32;
  TgModel wrong(other);
  CHECK_THROWS_AS(load_weights(wrong, read_checkpoint(dir / "m.ckpt")), ConfigError);

  std::string bytes = slurp(dir / "m.ckpt");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS(read_checkpoint(dir / "bad.ckpt"));
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, 40);
  CHECK_THROWS(read_checkpoint(dir / "short.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("initial loss is uninformative") {
  const RunConfig cfg;
  TgModel model(cfg.model_config());
  const auto batch = samples(cfg, synth::Split::Train, 4);
  for (const auto& s : batch) {
    const LossBreakdown l = sample_loss(model, s, 0.0);
    CHECK(l.bce.item() >= 0.6);
    CHECK(l.bce.item() <= 0.8);
    CHECK(l.total.item() == l.bce.item() + l.dice.item());
  }
}

TEST_CASE("one-epoch training smoke run is deterministic") {
  const auto dir = scratch("train");
  const RunConfig cfg = small_config();
  const auto train = samples(cfg, synth::Split::Train, 8);
  const auto val = samples(cfg, synth::Split::Val, 4);

  TgModel a(cfg.model_config());
  const TrainReport ra = train_model(cfg, a, train, val, dir / "a");
  TgModel b(cfg.model_config());
  const TrainReport rb = train_model(cfg, b, train, val, dir / "b");

  REQUIRE(ra.epochs.size() == 1);
  const EpochRecord& e = ra.epochs[0];
  CHECK(e.steps == 2);
  CHECK(e.total == e.bce + e.dice);
  CHECK(e.val_dsc >= 0.0);
  CHECK(e.val_dsc <= 1.0);
  for (const char* f : {"best.ckpt", "last.ckpt", "train_log.csv", "timing.csv"}) {
    CAPTURE(f);
    CHECK(std::filesystem::exists(dir / "a" / f));
  }
  CHECK(slurp(dir / "a" / "train_log.csv") == slurp(dir / "b" / "train_log.csv"));
  CHECK(slurp(dir / "a" / "last.ckpt") == slurp(dir / "b" / "last.ckpt"));
  CHECK(slurp(dir / "a" / "train_log.csv") == format_train_log(ra.epochs));

  // Training moved the weights.
  TgModel fresh(cfg.model_config());
  bool moved = false;
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
    moved = moved || fresh.parameters()[i]->value.to_vector() != a.parameters()[i]->value.to_vector();
  }
  CHECK(moved);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frozen encoders stay fixed during training") {
  const auto dir = scratch("frozen");
  RunConfig cfg = small_config();
  cfg.train.freeze_encoders = true;
  cfg.train.epochs = 3;
  TgModel model(cfg.model_config());
  TgModel fresh(cfg.model_config());
  train_model(cfg, model, samples(cfg, synth::Split::Train, 4), samples(cfg, synth::Split::Val, 2), dir);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const Parameter& p = *model.parameters()[i];
    const bool same = p.value.to_vector() == fresh.parameters()[i]->value.to_vector();
    const bool encoder = p.name.rfind("image.", 0) == 0 || p.name.rfind("text.", 0) == 0;
    CAPTURE(p.name);
    if (encoder) CHECK(same);
    moved += !same;
  }
  CHECK(moved > 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation") {
  const RunConfig cfg = small_config();
  TgModel model(cfg.model_config());
  const auto test = samples(cfg, synth::Split::Test, 32);

  const metrics::MetricsReport oracle = evaluate_oracle(test);
  for (const auto& s : oracle.samples) {
    CHECK(s.dsc == 1.0);
    CHECK(s.hd95 == 0.0);
    CHECK(s.asd == 0.0);
  }
  const metrics::MetricsReport one = evaluate(model, test, 1);
  const metrics::MetricsReport many = evaluate(model, test, 3);
  REQUIRE(one.samples.size() == 32);
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(one.samples[i].sample_id == test[i].id);
    CHECK(one.samples[i].dsc == many.samples[i].dsc);
    CHECK(one.samples[i].hd95 == many.samples[i].hd95);
    CHECK(one.samples[i].dsc >= 0.0);
    CHECK(one.samples[i].dsc <= 1.0);
  }
}

TEST_CASE("dataset generation writes all splits") {
  const auto dir = scratch("gen");
  const RunConfig cfg = small_config();
  const DataPaths p = generate_datasets(cfg, dir);
  CHECK(synth::load_dataset(p.train).size() == 8);
  CHECK(synth::load_dataset(p.val).size() == 4);
  CHECK(synth::load_dataset(p.test).size() == 4);
  CHECK(data_paths(dir).test == p.test);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gradient check on the tiny model") {
  GradcheckOptions opts;
  const GradcheckReport ok = gradcheck_tiny(opts);
  CHECK(ok.passed);
  CHECK(ok.worst.rel_error < 1e-4);
  CHECK(ok.modules.size() == 4);

  opts.lambda_bbox = 0.5;
  CHECK(gradcheck_tiny(opts).passed);

  opts.lambda_bbox = 0.0;
  opts.corrupt_op = "layer_norm";
  const GradcheckReport bad = gradcheck_tiny(opts);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst.rel_error > 1e-2);
  CHECK(format_gradcheck(bad, opts.tolerance).find("FAIL") != std::string::npos);
}
