#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hyperstab/hyperstab.hpp"

using namespace hyperstab;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hyperstab_test_experiment_" + name);
  fs::remove_all(dir);
  return dir.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_synthetic(const std::string& out) {
  return parse_config(
      "task = synthetic_denoise\n"
      "synthetic_n = 80\n"
      "synthetic_d = 8\n"
      "synthetic_segments = 2\n"
      "primary_hidden = 6\n"
      "trunk_widths = 4,8\n"
      "epochs = 2\n"
      "batch_size = 16\n"
      "lr = 1e-3\n"
      "output_dir = " + out + "\n");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HYPERSTAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParseAndDefaults) {
  const auto c = parse_config("# comment\n\nmode = npa\nlr = 0.01\ntrunk_widths = 8, 32\nfold_bias = false\n");
  EXPECT_EQ(c.mode, "npa");
  EXPECT_EQ(c.parametrization(), Parametrization::NPA);
  EXPECT_DOUBLE_EQ(c.lr, 0.01);
  EXPECT_EQ(c.trunk_widths, (std::vector<std::size_t>{8, 32}));
  EXPECT_FALSE(c.fold_bias);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.hidden(), (std::vector<std::size_t>{64, 64}));
  EXPECT_FALSE(c.norm().has_value());
  const auto ln = parse_config("mode = layernorm_h\n");
  EXPECT_EQ(ln.parametrization(), Parametrization::Default);
  ASSERT_TRUE(ln.norm().has_value());
}

TEST(Config, UnknownKeyAndBadValuesNameTheLine) {
  try {
    parse_config("lr = 0.1\nlearning_rate = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config("lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
  EXPECT_THROW(parse_config("mode = spectral\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("lr = -1\n").validate(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/hyperstab.cfg"), IoError);
}

TEST(Config, SerializeRoundTrip) {
  auto c = tiny_synthetic("runs/x");
  c.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  c.eval_gammas = {0.25, 0.75};
  const auto back = parse_config(serialize_config(c));
  EXPECT_EQ(serialize_config(back), serialize_config(c));
  EXPECT_EQ(back.lr, c.lr);
}

TEST(Checkpoint, SaveLoadRestoresState) {
  const auto dir = temp_dir("ckpt");
  fs::create_directories(dir);
  auto cfg = tiny_synthetic(dir);
  cfg.mode = "batchnorm_p";
  const auto data = load_task_data(cfg);
  Trainer a(cfg, data);
  for (const auto& b : a.next_epoch_batches()) a.train_step(b);
  const auto path = (fs::path(dir) / "a.hpnc").string();
  checkpoint_save(a.model(), a.optimizer(), path, a.steps());

  Trainer b(cfg, data);
  EXPECT_NE(state_hash(a.model()), state_hash(b.model()));
  EXPECT_EQ(checkpoint_load(b.model(), b.optimizer(), path), a.steps());
  EXPECT_EQ(state_hash(a.model()), state_hash(b.model()));
  EXPECT_EQ(a.optimizer().state(), b.optimizer().state());

  // Identical continuation from identical state (fixed γ; the sampling stream is not checkpointed).
  const Tensor x = slice_rows(data.train_x, 0, 8);
  for (Trainer* t : {&a, &b}) {
    const ParamSet theta = predict(t->model(), GammaSample({0.5}));
    t->optimizer().zero_grad();
    backward(sum_squares(primary_forward(t->model(), {&theta}, x, true)));
    t->optimizer().step();
  }
  EXPECT_EQ(state_hash(a.model()), state_hash(b.model()));
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto f = write_fixtures(temp_dir("corrupt"));
  auto bytes = detail::read_file(f.checkpoint);
  ASSERT_EQ(decode_checkpoint(bytes, f.checkpoint).size(), 2u);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic, "m"), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_checkpoint(bad_version, "v"), FormatError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped, "c"), FormatError);
  EXPECT_THROW(decode_checkpoint({bytes.begin(), bytes.begin() + 20}, "t"), FormatError);
}

TEST(Checkpoint, ArchitectureMismatchNamesEntry) {
  const auto dir = temp_dir("mismatch");
  fs::create_directories(dir);
  auto cfg = tiny_synthetic(dir);
  const auto data = load_task_data(cfg);
  Trainer a(cfg, data);
  const auto path = (fs::path(dir) / "a.hpnc").string();
  checkpoint_save(a.model(), a.optimizer(), path, 0);
  auto wider = cfg;
  wider.trunk_widths = {4, 9};
  Trainer b(wider, data);
  try {
    checkpoint_load(b.model(), b.optimizer(), path);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("first mismatch"), std::string::npos) << e.what();
  }
}

TEST(Experiment, SameSeedGivesIdenticalMetrics) {
  const auto d1 = temp_dir("det1"), d2 = temp_dir("det2"), d3 = temp_dir("det3");
  run_experiment(tiny_synthetic(d1));
  run_experiment(tiny_synthetic(d2));
  auto other = tiny_synthetic(d3);
  other.seed = 1;
  run_experiment(other);
  const auto m1 = slurp(fs::path(d1) / "metrics.csv");
  EXPECT_FALSE(m1.empty());
  EXPECT_EQ(m1, slurp(fs::path(d2) / "metrics.csv"));
  EXPECT_NE(m1, slurp(fs::path(d3) / "metrics.csv"));
  for (const char* f : {"config.txt", "grad_trace.csv", "grad_summary.csv", "summary.txt", "checkpoint.hpnc"}) {
    EXPECT_TRUE(fs::exists(fs::path(d1) / f)) << f;
  }
}

TEST(Experiment, ZeroEpochsWritesInitRowOnly) {
  auto cfg = tiny_synthetic(temp_dir("zero"));
  cfg.epochs = 0;
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].step, 0u);
  EXPECT_FALSE(r.records[0].train_loss.has_value());
  const auto csv = slurp(fs::path(cfg.output_dir) / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,epoch,train_loss,eval_loss,eval_metric,grad_norm_mean,grad_norm_std");
}

TEST(Experiment, EvaluationSchedule) {
  auto cfg = tiny_synthetic(temp_dir("schedule"));
  cfg.evals_per_epoch = 2;
  const auto r = run_experiment(cfg, {false, nullptr});
  ASSERT_EQ(r.records.size(), 5u);  // init + 2 per epoch
  EXPECT_DOUBLE_EQ(r.records[1].epoch, 0.5);
  EXPECT_DOUBLE_EQ(r.records[4].epoch, 2.0);
  EXPECT_EQ(r.traces.size(), 2u);
  EXPECT_EQ(r.records[4].step, r.steps);
}

TEST(Experiment, DivergedRunStopsAndSweepContinues) {
  const auto dir = temp_dir("sweep");
  auto cfg = tiny_synthetic(dir);
  const auto entries = run_sweep(cfg, "lr", {"1e300", "1e-3"});
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_TRUE(entries[0].run.diverged);
  EXPECT_FALSE(entries[1].run.diverged);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "sweep_summary.csv"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "lr=1e-3" / "metrics.csv"));
  EXPECT_THROW(run_sweep(cfg, "colour", {"red"}), ConfigError);
  EXPECT_THROW(run_sweep(cfg, "mode", {"npa", "bogus"}), ConfigError);
}

TEST(Experiment, DiagnoseInitAndCheckpoint) {
  const auto dir = temp_dir("diagnose");
  auto cfg = tiny_synthetic(dir);
  const auto init = diagnose(cfg, std::nullopt);
  EXPECT_FALSE(init.from_checkpoint);
  EXPECT_GT(init.fit.r2, 0.9999);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "weight_sweep.csv"));
  run_experiment(cfg);
  const auto trained = diagnose(cfg, (fs::path(dir) / "checkpoint.hpnc").string());
  EXPECT_TRUE(trained.from_checkpoint);
}

TEST(Cli, ExitCodes) {
  const auto dir = temp_dir("cli");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("fixtures --out " + dir + "/fx"), 0);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "fx" / "images.idx.gz"));
  EXPECT_EQ(run_cli("no_such_command"), 1);

  const auto bad_cfg = (fs::path(dir) / "bad.cfg").string();
  std::ofstream(bad_cfg) << "colour = blue\n";
  EXPECT_EQ(run_cli("train --config " + bad_cfg), 1);

  const auto missing = (fs::path(dir) / "missing.cfg").string();
  std::ofstream(missing) << "data_dir = " << dir << "/nowhere\n";
  EXPECT_EQ(run_cli("train --quiet --config " + missing + " --out " + dir + "/m"), 3);

  const auto ok_cfg = (fs::path(dir) / "ok.cfg").string();
  std::ofstream(ok_cfg) << serialize_config(tiny_synthetic(dir + "/ok"));
  EXPECT_EQ(run_cli("train --quiet --config " + ok_cfg), 0);

  const auto div_cfg = (fs::path(dir) / "div.cfg").string();
  auto div = tiny_synthetic(dir + "/div");
  div.lr = 1e300;
  std::ofstream(div_cfg) << serialize_config(div);
  EXPECT_EQ(run_cli("train --quiet --config " + div_cfg), 2);
}
