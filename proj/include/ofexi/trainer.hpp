#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ofexi/accounting.hpp"
#include "ofexi/envs.hpp"
#include "ofexi/replay_buffer.hpp"
#include "ofexi/sac.hpp"

namespace ofexi {

/// Step counts of -1 resolve to the scaled defaults in resolve().
struct Schedule {
  std::int64_t total_steps = 100000;
  std::int64_t theta_freeze_steps = -1;  // default 20% of total
  double final_round_fraction = 0.2;
  std::int64_t random_fill_steps = -1;     // default 1% of total
  std::int64_t ofe_pretrain_updates = -1;  // default = random_fill_steps
  std::int64_t eval_every = -1;            // default 2% of total
  std::int64_t prune_every = 1000;
  int eval_episodes = 10;

  Schedule resolve() const;
  std::int64_t round_start() const;  // first step of the final rounding window
};

struct RunConfig {
  std::string env = "pendulum";
  std::uint64_t seed = 0;
  Schedule schedule;
  SacConfig sac;
  RegHyper hyper;
  double ofe_lr = 3e-4;
  double theta_lr = 3e-4;
  std::size_t replay_capacity = 1000000;
  std::vector<Eigen::Index> units_o = {16, 16, 16, 16};
  std::vector<Eigen::Index> units_oa = {16, 16, 16, 16};
  std::vector<Eigen::Index> hidden = {64, 64};
  std::int64_t baseline_deploy = 0;  // <= 0: use the initial counts of this run
  std::int64_t baseline_train = 0;
  bool freeze_gates = false;  // gates fixed at 1 for the whole run
  bool plain = false;         // no gates, no regularizer, no pruning
  std::string out_dir = "runs";
};

/// Throws ConfigError naming the violated constraint.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
void validate(const RunConfig& cfg);

struct MetricsRow {
  std::int64_t step = 0;
  double eval_return = 0.0;  // NaN on rows emitted by a prune event only
  double l_aux = 0.0;
  double c_ofe = 0.0;
  double c_pi = 0.0;
  double c_v = 0.0;
  double c_q1 = 0.0;
  double c_q2 = 0.0;
  std::int64_t params_deploy = 0;
  std::int64_t params_train = 0;
  double dR = 1.0;
  double tR = 1.0;
  double theta_binary_fraction = 0.0;
  std::string units;  // per-layer widths, e.g. "o=16/16 oa=16/16 pi=64/64 ..."
};

struct RunArtifacts {
  std::vector<MetricsRow> metrics;
  std::vector<ComplexitySnapshot> snapshots;
  std::int64_t initial_params_train = 0;
  std::int64_t initial_params_deploy = 0;
};

/// Independent random streams; each is derived from the run seed.
struct RngStreams {
  Rng action;  // exploration noise and random fill
  Rng replay;  // minibatch indices
  Rng gates;   // xi draws and reparameterization noise
  explicit RngStreams(std::uint64_t seed = 0);
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  /// One environment step with the extractor and agent updates, plus rounding, pruning
  /// and evaluation when due.
  void step();
  RunArtifacts run();

  /// Mean return of mean-action episodes on a dedicated evaluation env.
  double evaluate(int episodes);

  /// Removes every unit whose theta is below the tolerance. Returns the
  /// number of removed units.
  int prune_sweep();
  void round_all_gates();

  ComplexitySnapshot snapshot() const;
  MetricsRow metrics_row(double eval_return) const;
  double theta_binary_fraction() const;
  std::string units_summary() const;

  bool theta_updates_enabled() const;

  const RunConfig& config() const { return cfg_; }
  const Schedule& schedule() const { return sched_; }
  Agent& agent() { return agent_; }
  const Agent& agent() const { return agent_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  Env& env() { return *env_; }
  const Env& env() const { return *env_; }
  RngStreams& rngs() { return rngs_; }
  const RngStreams& rngs() const { return rngs_; }
  std::int64_t step_count() const { return step_; }
  std::uint64_t episode_index() const { return episode_; }
  const RowVec& current_obs() const { return obs_; }
  double last_aux_loss() const { return last_aux_; }
  double last_eval_return() const { return last_eval_; }
  bool gates_rounded() const { return rounded_; }
  const RunArtifacts& artifacts() const { return artifacts_; }

  /// Used by checkpoint restore.
  void restore_progress(std::int64_t step, std::uint64_t episode, const RowVec& obs,
                        double last_aux, double last_eval, bool rounded);

 private:
  void pretrain_ofe();
  double ofe_update();
  void agent_update();
  FeatureBatch features(const Batch& b);
  void emit(double eval_return);

  RunConfig cfg_;
  Schedule sched_;
  std::unique_ptr<Env> env_;
  std::unique_ptr<Env> eval_env_;
  Agent agent_;
  ReplayBuffer buffer_;
  RngStreams rngs_;
  std::int64_t step_ = 0;
  std::uint64_t episode_ = 0;
  RowVec obs_;
  double last_aux_ = 0.0;
  double last_eval_ = 0.0;
  bool rounded_ = false;
  RunArtifacts artifacts_;
};

/// Executes a whole run: random fill, OFE pre-training, main loop, final
/// rounding window, final report.
RunArtifacts run(const RunConfig& cfg);

}  // namespace ofexi
