#include "ofexi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ofexi {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kActionStream = 1;
constexpr std::uint64_t kReplayStream = 2;
constexpr std::uint64_t kGateStream = 3;
constexpr std::uint64_t kEpisodeStream = 4;
constexpr std::uint64_t kEvalStream = 5;

std::int64_t fraction_of(std::int64_t total, double f) {
  return static_cast<std::int64_t>(std::llround(f * static_cast<double>(total)));
}

std::string widths_string(const std::vector<Eigen::Index>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i > 0) s += '/';
    s += std::to_string(w[i]);
  }
  return s;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStreams::RngStreams(std::uint64_t seed)
    : action(derive_seed(seed, kActionStream)),
      replay(derive_seed(seed, kReplayStream)),
      gates(derive_seed(seed, kGateStream)) {}

Schedule Schedule::resolve() const {
  Schedule s = *this;
  if (s.theta_freeze_steps < 0) s.theta_freeze_steps = fraction_of(total_steps, 0.2);
  if (s.random_fill_steps < 0) s.random_fill_steps = fraction_of(total_steps, 0.01);
  if (s.ofe_pretrain_updates < 0) s.ofe_pretrain_updates = s.random_fill_steps;
  if (s.eval_every < 0) s.eval_every = std::max<std::int64_t>(1, fraction_of(total_steps, 0.02));
  return s;
}

std::int64_t Schedule::round_start() const {
  return total_steps - fraction_of(total_steps, final_round_fraction);
}

void validate(const RunConfig& cfg) {
  const auto& h = cfg.hyper;
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(cfg.env == "pendulum" || cfg.env == "pointmass", "env must be pendulum or pointmass");
  require(h.nu_ofe >= 0 && h.nu_pi >= 0 && h.nu_v >= 0 && h.nu_q >= 0, "every nu must be >= 0");
  require(h.lambda_ofe >= 0 && h.lambda_rl >= 0, "every lambda must be >= 0");
  require(h.rho >= 0 && h.rho <= 1, "rho must lie in [0, 1]");
  require(h.theta_tol > 0 && h.theta_tol < 0.5, "theta_tol must lie in (0, 0.5)");
  require(cfg.sac.discount > 0 && cfg.sac.discount < 1, "discount must lie in (0, 1)");
  require(cfg.sac.polyak_tau > 0 && cfg.sac.polyak_tau < 1, "polyak_tau must lie in (0, 1)");
  require(cfg.sac.entropy_alpha >= 0, "entropy_alpha must be >= 0");
  require(cfg.sac.batch_size >= 2, "batch_size must be >= 2");
  require(cfg.sac.lr > 0 && cfg.ofe_lr > 0 && cfg.theta_lr > 0, "learning rates must be > 0");
  require(cfg.replay_capacity > 0, "replay_capacity must be > 0");
  const Schedule& s = cfg.schedule;
  require(s.total_steps >= 0, "steps must be >= 0");
  require(s.final_round_fraction >= 0 && s.final_round_fraction < 1,
          "final_round_fraction must lie in [0, 1)");
  require(s.prune_every > 0, "prune_every must be > 0");
  require(s.eval_episodes > 0, "eval_episodes must be > 0");
  const Schedule r = s.resolve();
  if (r.total_steps > 0) {
    require(static_cast<double>(r.theta_freeze_steps) +
                    r.final_round_fraction * static_cast<double>(r.total_steps) <
                static_cast<double>(r.total_steps),
            "theta_freeze_steps + final_round_fraction * steps must be < steps");
  }
  for (auto w : cfg.units_o) require(w >= 0, "layer widths must be >= 0");
  for (auto w : cfg.units_oa) require(w >= 0, "layer widths must be >= 0");
  for (auto w : cfg.hidden) require(w >= 0, "layer widths must be >= 0");
}

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg), sched_(cfg.schedule.resolve()), rngs_(cfg.seed) {
  validate(cfg_);
  env_ = make_env(cfg_.env);
  eval_env_ = make_env(cfg_.env);
  const EnvSpec& spec = env_->spec();

  Rng init(derive_seed(cfg_.seed, kInitStream));
  AgentArch arch{{spec.d_o, spec.d_a, cfg_.units_o, cfg_.units_oa}, cfg_.hidden};
  agent_ = make_agent(arch, init);
  agent_.plain = cfg_.plain;
  if (cfg_.freeze_gates) {
    for (GateVector* g : agent_.all_gates()) round_and_freeze(*g);
    for (GateVector* g : agent_.v_target.gates()) round_and_freeze(*g);
  }

  const auto cap = std::min<std::size_t>(
      cfg_.replay_capacity, static_cast<std::size_t>(std::max<std::int64_t>(sched_.total_steps, 1)));
  buffer_ = ReplayBuffer(cap, spec.d_o, spec.d_a);
  obs_ = env_->reset(derive_seed(derive_seed(cfg_.seed, kEpisodeStream), episode_));

  const auto models = agent_.models(cfg_.hyper);
  artifacts_.initial_params_deploy = param_count(models, ParamGroup::deploy);
  artifacts_.initial_params_train = param_count(models, ParamGroup::train);
  if (cfg_.baseline_deploy <= 0) cfg_.baseline_deploy = artifacts_.initial_params_deploy;
  if (cfg_.baseline_train <= 0) cfg_.baseline_train = artifacts_.initial_params_train;
}

bool Trainer::theta_updates_enabled() const {
  return !cfg_.plain && !cfg_.freeze_gates && !rounded_ && step_ > sched_.theta_freeze_steps;
}

void Trainer::step() {
  const EnvSpec& spec = env_->spec();
  RowVec a(spec.d_a);
  if (step_ < sched_.random_fill_steps) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = 2.0 * uniform01(rngs_.action) - 1.0;
  } else {
    const Tensor2 z = phi_o_forward(agent_.ofe, Tensor2(obs_), agent_.eval_mode());
    a = act(agent_.pi, RowVec(z.row(0)), ActMode::stochastic, &rngs_.action, cfg_.plain);
  }
  const StepResult r = env_->step(scale_action(spec, a));
  buffer_.add({obs_, a, r.reward, r.next_obs, r.terminal});
  if (r.done) {
    ++episode_;
    obs_ = env_->reset(derive_seed(derive_seed(cfg_.seed, kEpisodeStream), episode_));
  } else {
    obs_ = r.next_obs;
  }
  ++step_;

  const std::int64_t fill = sched_.random_fill_steps;
  if (fill > 0 && step_ == fill) pretrain_ofe();
  if ((step_ > fill || fill == 0) && buffer_.size() >= cfg_.sac.batch_size) {
    last_aux_ = ofe_update();
    agent_update();
  }

  if (!cfg_.plain) {
    if (!rounded_ && step_ >= sched_.round_start()) {
      round_all_gates();
      if (prune_sweep() > 0) emit(std::numeric_limits<double>::quiet_NaN());
    } else if (step_ % sched_.prune_every == 0) {
      if (prune_sweep() > 0) emit(std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (step_ % sched_.eval_every == 0 || step_ == sched_.total_steps) {
    emit(evaluate(sched_.eval_episodes));
  }
}

RunArtifacts Trainer::run() {
  if (artifacts_.snapshots.empty()) artifacts_.snapshots.push_back(snapshot());
  while (step_ < sched_.total_steps) step();
  return artifacts_;
}

void Trainer::pretrain_ofe() {
  if (buffer_.size() < cfg_.sac.batch_size) return;
  for (std::int64_t i = 0; i < sched_.ofe_pretrain_updates; ++i) last_aux_ = ofe_update();
}

double Trainer::ofe_update() {
  OfeXiNet& ofe = agent_.ofe;
  const Batch b = buffer_.sample(cfg_.sac.batch_size, rngs_.replay);
  zero_grads(ofe);
  const AuxHyper hyper{cfg_.hyper.lambda_ofe, cfg_.hyper.nu_ofe, cfg_.hyper.rho};
  const auto res = aux_loss_and_grads(ofe, {b.obs, b.act, b.next_obs}, hyper,
                                      rl_shapes(agent_.models(cfg_.hyper)),
                                      agent_.train_mode(rngs_.gates));
  AdamConfig adam;
  adam.lr = cfg_.ofe_lr;
  for (Param* p : ofe.weight_params()) adam_step(*p, adam);
  AdamConfig theta_adam = adam;
  theta_adam.lr = cfg_.theta_lr;
  const bool update_theta = theta_updates_enabled();
  for (GateVector* g : ofe.gates()) {
    if (update_theta) {
      theta_step(*g, theta_adam);
    } else {
      g->theta.zero_grad();
    }
  }
  return res.loss;
}

FeatureBatch Trainer::features(const Batch& b) {
  const RunMode eval = agent_.eval_mode();
  FeatureBatch f;
  f.z_o = phi_o_forward(agent_.ofe, b.obs, eval);
  f.z_o_next = phi_o_forward(agent_.ofe, b.next_obs, eval);
  f.z_oa = phi_oa_forward(agent_.ofe, f.z_o, b.act, eval);
  f.reward = b.reward;
  f.not_done = b.not_done;
  return f;
}

void Trainer::agent_update() {
  const Batch b = buffer_.sample(cfg_.sac.batch_size, rngs_.replay);
  const FeatureBatch f = features(b);
  UpdateOptions opt;
  opt.update_theta = theta_updates_enabled();
  opt.adam.lr = cfg_.sac.lr;
  opt.theta_lr = cfg_.theta_lr;
  update_critics(agent_, f, cfg_.sac, cfg_.hyper, rngs_.gates, opt);
  update_policy_and_value(agent_, f, cfg_.sac, cfg_.hyper, rngs_.gates, opt);
}

void Trainer::round_all_gates() {
  for (GateVector* g : agent_.all_gates()) round_and_freeze(*g);
  for (std::size_t l = 0; l < agent_.v.hidden.size(); ++l) {
    agent_.v_target.hidden[l].gate = agent_.v.hidden[l].gate;
  }
  rounded_ = true;
}

int Trainer::prune_sweep() {
  if (cfg_.plain) return 0;
  const double tol = cfg_.hyper.theta_tol;
  const Downstream down = agent_.downstream();
  int removed = 0;
  OfeXiNet& ofe = agent_.ofe;
  for (OfeSide side : {OfeSide::o, OfeSide::oa}) {
    auto& blocks = side == OfeSide::o ? ofe.blocks_o : ofe.blocks_oa;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      auto idx = prunable_indices(blocks[l].gate, tol);
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        prune_unit(ofe, side, l, *it, down, tol);
        ++removed;
      }
    }
  }
  for (MlpXiNet* net : {&agent_.pi, &agent_.v, &agent_.q1, &agent_.q2}) {
    for (std::size_t l = 0; l < net->hidden.size(); ++l) {
      auto idx = prunable_indices(net->hidden[l].gate, tol);
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        prune_hidden_unit(*net, l, *it);
        if (net == &agent_.v) prune_hidden_unit(agent_.v_target, l, *it);
        ++removed;
      }
    }
  }
  if (removed > 0) artifacts_.snapshots.push_back(snapshot());
  return removed;
}

double Trainer::evaluate(int episodes) {
  const EnvSpec& spec = eval_env_->spec();
  const std::uint64_t base = derive_seed(cfg_.seed, kEvalStream);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    RowVec o = eval_env_->reset(derive_seed(base, static_cast<std::uint64_t>(e)));
    for (;;) {
      const Tensor2 z = phi_o_forward(agent_.ofe, Tensor2(o), agent_.eval_mode());
      const RowVec a = act(agent_.pi, RowVec(z.row(0)), ActMode::mean, nullptr, cfg_.plain);
      const StepResult r = eval_env_->step(scale_action(spec, a));
      total += r.reward;
      o = r.next_obs;
      if (r.done) break;
    }
  }
  last_eval_ = total / episodes;
  return last_eval_;
}

ComplexitySnapshot Trainer::snapshot() const {
  return take_snapshot(agent_.models(cfg_.hyper), cfg_.hyper.rho, cfg_.hyper.nu_ofe,
                       cfg_.baseline_deploy, cfg_.baseline_train, step_);
}

double Trainer::theta_binary_fraction() const {
  std::int64_t binary = 0;
  std::int64_t total = 0;
  auto count = [&](const GateVector& g) {
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double t = g.at(i);
      binary += (t == 0.0 || t == 1.0) ? 1 : 0;
      ++total;
    }
  };
  for (const auto& b : agent_.ofe.blocks_o) count(b.gate);
  for (const auto& b : agent_.ofe.blocks_oa) count(b.gate);
  for (const MlpXiNet* net : {&agent_.pi, &agent_.v, &agent_.q1, &agent_.q2}) {
    for (const auto& l : net->hidden) count(l.gate);
  }
  return total == 0 ? 1.0 : static_cast<double>(binary) / static_cast<double>(total);
}

std::string Trainer::units_summary() const {
  std::ostringstream os;
  os << "o=" << widths_string(agent_.ofe.units_o()) << " oa=" << widths_string(agent_.ofe.units_oa())
     << " pi=" << widths_string(agent_.pi.widths()) << " v=" << widths_string(agent_.v.widths())
     << " q1=" << widths_string(agent_.q1.widths()) << " q2=" << widths_string(agent_.q2.widths());
  return os.str();
}

MetricsRow Trainer::metrics_row(double eval_return) const {
  const auto snap = snapshot();
  MetricsRow row;
  row.step = step_;
  row.eval_return = eval_return;
  row.l_aux = last_aux_;
  row.c_ofe = snap.c_ofe;
  for (const auto& [name, c] : snap.c_x) {
    if (name == "pi") row.c_pi = c;
    if (name == "v") row.c_v = c;
    if (name == "q1") row.c_q1 = c;
    if (name == "q2") row.c_q2 = c;
  }
  row.params_deploy = snap.params_deploy;
  row.params_train = snap.params_train;
  row.dR = snap.dR;
  row.tR = snap.tR;
  row.theta_binary_fraction = theta_binary_fraction();
  row.units = units_summary();
  return row;
}

void Trainer::emit(double eval_return) { artifacts_.metrics.push_back(metrics_row(eval_return)); }

void Trainer::restore_progress(std::int64_t step, std::uint64_t episode, const RowVec& obs,
                               double last_aux, double last_eval, bool rounded) {
  step_ = step;
  episode_ = episode;
  obs_ = obs;
  last_aux_ = last_aux;
  last_eval_ = last_eval;
  rounded_ = rounded;
}

RunArtifacts run(const RunConfig& cfg) {
  Trainer t(cfg);
  return t.run();
}

}  // namespace ofexi
