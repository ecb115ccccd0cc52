#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "ofexi/checkpoint.hpp"
#include "ofexi/config.hpp"
#include "ofexi/report.hpp"

using namespace ofexi;
namespace fs = std::filesystem;

namespace {

CliResult parse(std::vector<std::string> args) {
  args.insert(args.begin(), "ofexi_train");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ofexi_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig small_config(std::int64_t steps) {
  RunConfig cfg;
  cfg.schedule.total_steps = steps;
  cfg.schedule.prune_every = 100;
  cfg.schedule.eval_episodes = 2;
  cfg.units_o = {4, 4};
  cfg.units_oa = {4};
  cfg.hidden = {16, 16};
  cfg.sac.batch_size = 32;
  cfg.theta_lr = 3e-2;
  cfg.hyper.nu_ofe = 1e-3;
  cfg.hyper.nu_pi = 1e-2;
  cfg.hyper.nu_v = 1e-2;
  cfg.hyper.nu_q = 1e-2;
  return cfg;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(OFEXI_TRAIN_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, FlagsSetConfigFields) {
  const auto r = parse({"--rho", "0.5", "--theta-tol", "0.1", "--env", "pointmass", "--seed", "7",
                        "--steps", "1234", "--nu-q", "0.25", "--out-dir", "x"});
  EXPECT_EQ(r.cfg.hyper.rho, 0.5);
  EXPECT_EQ(r.cfg.hyper.theta_tol, 0.1);
  EXPECT_EQ(r.cfg.env, "pointmass");
  EXPECT_EQ(r.cfg.seed, 7u);
  EXPECT_EQ(r.cfg.schedule.total_steps, 1234);
  EXPECT_EQ(r.cfg.hyper.nu_q, 0.25);
  EXPECT_EQ(r.cfg.out_dir, "x");
}

TEST(Cli, RejectsOutOfRangeAndUnknown) {
  EXPECT_THROW(parse({"--rho", "1.5"}), ConfigError);
  EXPECT_THROW(parse({"--theta-tol", "0.7"}), ConfigError);
  EXPECT_THROW(parse({"--env", "cheetah"}), ConfigError);
  EXPECT_THROW(parse({"--nu-pi", "-1"}), ConfigError);
  EXPECT_THROW(parse({"--bogus"}), ConfigError);
}

TEST(Cli, HelpRequestsEarlyExitWithDefaults) {
  const auto r = parse({"--help"});
  EXPECT_TRUE(r.exit_early);
  EXPECT_NE(r.message.find("nu_q"), std::string::npos);
}

TEST(Cli, NoArgumentsGiveDefaults) {
  unsetenv("OFEXI_OUT_DIR");
  const auto r = parse({});
  EXPECT_EQ(to_config_text(r.cfg), to_config_text(RunConfig{}));
}

TEST(Cli, FileValuesAreOverriddenByFlagsAndEnvFillsOutDir) {
  const fs::path dir = scratch("cli");
  const fs::path file = dir / "run.ini";
  std::ofstream(file) << "# comment\n[run]\nseed = 3\n[hyper]\nnu_pi = 0.5\nrho = 0.25\n"
                         "[arch]\nhidden = 8, 8\n";
  setenv("OFEXI_OUT_DIR", "from_env", 1);
  const auto r = parse({"--config", file.string(), "--rho", "0.75"});
  unsetenv("OFEXI_OUT_DIR");
  EXPECT_EQ(r.cfg.seed, 3u);
  EXPECT_EQ(r.cfg.hyper.nu_pi, 0.5);
  EXPECT_EQ(r.cfg.hyper.rho, 0.75);
  EXPECT_EQ(r.cfg.hidden, (std::vector<Eigen::Index>{8, 8}));
  EXPECT_EQ(r.cfg.out_dir, "from_env");
}

TEST(ConfigText, RoundTripsAndRejectsUnknownKeys) {
  RunConfig cfg = small_config(777);
  cfg.hyper.nu_v = 0.1 + 0.2;
  cfg.freeze_gates = true;
  RunConfig back;
  apply_config_text(to_config_text(cfg), back);
  EXPECT_EQ(to_config_text(back), to_config_text(cfg));
  EXPECT_EQ(back.hyper.nu_v, cfg.hyper.nu_v);
  EXPECT_THROW(apply_config_text("[hyper]\nnu_x = 1\n", back), ConfigError);
  EXPECT_THROW(apply_config_text("[nowhere]\nseed = 1\n", back), ConfigError);
  EXPECT_THROW(apply_config_text("[run]\nseed = abc\n", back), ConfigError);
}

TEST(Metrics, EmptyRunWritesHeaderOnly) {
  std::ostringstream os;
  write_metrics(os, {});
  std::string header;
  for (const auto& c : metrics_columns()) header += (header.empty() ? "" : ",") + c;
  EXPECT_EQ(os.str(), header + "\n");
}

TEST(Metrics, RowsRoundTripAtSixDigits) {
  const RunArtifacts art = run(small_config(600));
  ASSERT_FALSE(art.metrics.empty());
  std::ostringstream os;
  write_metrics(os, art.metrics);
  std::istringstream is(os.str());
  const auto rows = read_metrics(is);
  ASSERT_EQ(rows.size(), art.metrics.size());
  auto close = [](double a, double b) {
    if (std::isnan(a)) return std::isnan(b);
    return std::abs(a - b) <= 5e-6 * std::max(1e-300, std::abs(a));
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = art.metrics[i];
    const auto& b = rows[i];
    EXPECT_EQ(a.step, b.step);
    EXPECT_TRUE(close(a.eval_return, b.eval_return));
    EXPECT_TRUE(close(a.l_aux, b.l_aux));
    EXPECT_TRUE(close(a.c_ofe, b.c_ofe));
    EXPECT_TRUE(close(a.c_q2, b.c_q2));
    EXPECT_EQ(a.params_train, b.params_train);
    EXPECT_EQ(a.units, b.units);
    // dR and tR recomputed from the count columns.
    EXPECT_NEAR(b.dR, static_cast<double>(b.params_deploy) / art.initial_params_deploy, 5e-6);
    EXPECT_NEAR(b.tR, static_cast<double>(b.params_train) / art.initial_params_train, 5e-6);
  }
}

TEST(Architecture, UnprunedCountsMatchConfiguredWidths) {
  Trainer t(small_config(100));
  const auto r = architecture_report(t);
  ASSERT_EQ(r.networks.size(), 7u);
  EXPECT_EQ(r.networks[0].units, (std::vector<Eigen::Index>{4, 4}));
  EXPECT_EQ(r.networks[1].units, (std::vector<Eigen::Index>{4}));
  EXPECT_EQ(r.networks[3].units, (std::vector<Eigen::Index>{16, 16}));
  std::int64_t sum = 0;
  for (const auto& n : r.networks) sum += n.params;
  EXPECT_EQ(sum, r.params_train);
  const auto models = t.agent().models(t.config().hyper);
  EXPECT_EQ(r.params_deploy, param_count(models, ParamGroup::deploy));

  const auto j = nlohmann::json::parse(architecture_json(r));
  EXPECT_EQ(j["networks"]["phi_o"]["total_units"], 8);
  EXPECT_EQ(j["networks"]["q2"]["units"][1], 16);
  EXPECT_EQ(j["params_train"], r.params_train);
  EXPECT_NE(architecture_table(r).find("phi_oa"), std::string::npos);
}

TEST(Architecture, FullyPrunedSecondLayerStaysValid) {
  Trainer t(small_config(500));
  for (int i = 0; i < 100; ++i) t.step();
  t.agent().ofe.blocks_o[1].gate.theta.value.setZero();
  t.agent().pi.hidden[1].gate.theta.value.setZero();
  EXPECT_EQ(t.prune_sweep(), 4 + 16);
  const auto r = architecture_report(t);
  EXPECT_EQ(r.networks[0].units, (std::vector<Eigen::Index>{4, 0}));
  EXPECT_EQ(r.networks[3].units, (std::vector<Eigen::Index>{16, 0}));
  const double ret = t.evaluate(1);
  EXPECT_TRUE(std::isfinite(ret));
  while (t.step_count() < 500) t.step();
  const auto j = nlohmann::json::parse(architecture_json(architecture_report(t)));
  EXPECT_EQ(j["networks"]["pi"]["units"][1], 0);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdenticalAndEvaluatesEqually) {
  RunConfig cfg = small_config(1500);
  Trainer t(cfg);
  while (t.step_count() < 700) t.step();
  const std::string bytes = serialize(t);
  auto loaded = deserialize(bytes);
  EXPECT_EQ(serialize(*loaded), bytes);
  EXPECT_EQ(loaded->evaluate(2), t.evaluate(2));

  const fs::path dir = scratch("ckpt");
  save_checkpoint(t, (dir / "a.ckpt").string());
  auto from_disk = load_checkpoint((dir / "a.ckpt").string());
  EXPECT_EQ(serialize(*from_disk), serialize(t));
}

TEST(Checkpoint, ResumedRunMatchesUninterruptedRun) {
  RunConfig cfg = small_config(1500);
  Trainer a(cfg);
  while (a.step_count() < 900) a.step();
  auto b = deserialize(serialize(a));
  while (a.step_count() < 1500) a.step();
  while (b->step_count() < 1500) b->step();
  EXPECT_EQ(serialize(a), serialize(*b));
  std::ostringstream tail_a, tail_b;
  write_metrics(tail_a, {a.artifacts().metrics.back()});
  write_metrics(tail_b, {b->artifacts().metrics.back()});
  EXPECT_EQ(tail_a.str(), tail_b.str());
}

TEST(Checkpoint, CorruptOrForeignFilesAreRejected) {
  Trainer t(small_config(300));
  for (int i = 0; i < 50; ++i) t.step();
  const std::string good = serialize(t);

  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x5a;
  EXPECT_THROW(deserialize(flipped), CheckpointError);
  EXPECT_THROW(deserialize(good.substr(0, good.size() - 9)), CheckpointError);
  EXPECT_THROW(deserialize("not a checkpoint"), CheckpointError);
  std::string other_version = good;
  other_version[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize(other_version), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/run.ckpt"), CheckpointError);
}

TEST(Binary, ExitCodes) {
  const fs::path dir = scratch("bin");
  EXPECT_EQ(run_binary("--rho 1.5"), 2);
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("--steps 0 --out-dir " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "architecture.json"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
}
