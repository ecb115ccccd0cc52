#include "ofexi/config.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ofexi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return n;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<Eigen::Index> to_widths(const std::string& key, const std::string& v) {
  std::vector<Eigen::Index> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<Eigen::Index>(to_int(key, item)));
  }
  return out;
}

std::string widths_text(const std::vector<Eigen::Index>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? ", " : "") + std::to_string(w[i]);
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto dbl = [](double RunConfig::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*field = to_double(k, v);
      };
    };
    t["run.env"] = [](RunConfig& c, const std::string&, const std::string& v) { c.env = v; };
    t["run.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.seed = static_cast<std::uint64_t>(to_int(k, v));
    };
    t["run.out_dir"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
    t["run.freeze_gates"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.freeze_gates = to_bool(k, v);
    };
    t["run.plain"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.plain = to_bool(k, v);
    };
    t["run.baseline_deploy"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.baseline_deploy = to_int(k, v);
    };
    t["run.baseline_train"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.baseline_train = to_int(k, v);
    };
    t["run.replay_capacity"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.replay_capacity = static_cast<std::size_t>(to_int(k, v));
    };
    t["run.ofe_lr"] = dbl(&RunConfig::ofe_lr);
    t["run.theta_lr"] = dbl(&RunConfig::theta_lr);

    auto sched = [](std::int64_t Schedule::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.schedule.*field = to_int(k, v);
      };
    };
    t["schedule.steps"] = sched(&Schedule::total_steps);
    t["schedule.theta_freeze_steps"] = sched(&Schedule::theta_freeze_steps);
    t["schedule.random_fill_steps"] = sched(&Schedule::random_fill_steps);
    t["schedule.ofe_pretrain_updates"] = sched(&Schedule::ofe_pretrain_updates);
    t["schedule.eval_every"] = sched(&Schedule::eval_every);
    t["schedule.prune_every"] = sched(&Schedule::prune_every);
    t["schedule.final_round_fraction"] = [](RunConfig& c, const std::string& k,
                                            const std::string& v) {
      c.schedule.final_round_fraction = to_double(k, v);
    };
    t["schedule.eval_episodes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.schedule.eval_episodes = static_cast<int>(to_int(k, v));
    };

    auto sac = [](double SacConfig::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.sac.*field = to_double(k, v);
      };
    };
    t["sac.discount"] = sac(&SacConfig::discount);
    t["sac.polyak_tau"] = sac(&SacConfig::polyak_tau);
    t["sac.entropy_alpha"] = sac(&SacConfig::entropy_alpha);
    t["sac.lr"] = sac(&SacConfig::lr);
    t["sac.batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.sac.batch_size = static_cast<std::size_t>(to_int(k, v));
    };

    auto hyper = [](double RegHyper::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.hyper.*field = to_double(k, v);
      };
    };
    t["hyper.lambda_ofe"] = hyper(&RegHyper::lambda_ofe);
    t["hyper.lambda_rl"] = hyper(&RegHyper::lambda_rl);
    t["hyper.nu_ofe"] = hyper(&RegHyper::nu_ofe);
    t["hyper.nu_pi"] = hyper(&RegHyper::nu_pi);
    t["hyper.nu_v"] = hyper(&RegHyper::nu_v);
    t["hyper.nu_q"] = hyper(&RegHyper::nu_q);
    t["hyper.rho"] = hyper(&RegHyper::rho);
    t["hyper.theta_tol"] = hyper(&RegHyper::theta_tol);

    t["arch.units_o"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.units_o = to_widths(k, v);
    };
    t["arch.units_oa"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.units_oa = to_widths(k, v);
    };
    t["arch.hidden"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.hidden = to_widths(k, v);
    };
    return t;
  }();
  return table;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void apply_config_text(const std::string& text, RunConfig& cfg) {
  std::stringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, trim(line.substr(eq + 1)));
  }
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(ss.str(), base);
  return base;
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream os;
  os << "[run]\n"
     << "env = " << c.env << "\n"
     << "seed = " << c.seed << "\n"
     << "out_dir = " << c.out_dir << "\n"
     << "freeze_gates = " << (c.freeze_gates ? "true" : "false") << "\n"
     << "plain = " << (c.plain ? "true" : "false") << "\n"
     << "baseline_deploy = " << c.baseline_deploy << "\n"
     << "baseline_train = " << c.baseline_train << "\n"
     << "replay_capacity = " << c.replay_capacity << "\n"
     << "ofe_lr = " << num(c.ofe_lr) << "\n"
     << "theta_lr = " << num(c.theta_lr) << "\n"
     << "\n[schedule]\n"
     << "steps = " << c.schedule.total_steps << "\n"
     << "theta_freeze_steps = " << c.schedule.theta_freeze_steps << "\n"
     << "final_round_fraction = " << num(c.schedule.final_round_fraction) << "\n"
     << "random_fill_steps = " << c.schedule.random_fill_steps << "\n"
     << "ofe_pretrain_updates = " << c.schedule.ofe_pretrain_updates << "\n"
     << "eval_every = " << c.schedule.eval_every << "\n"
     << "prune_every = " << c.schedule.prune_every << "\n"
     << "eval_episodes = " << c.schedule.eval_episodes << "\n"
     << "\n[sac]\n"
     << "discount = " << num(c.sac.discount) << "\n"
     << "polyak_tau = " << num(c.sac.polyak_tau) << "\n"
     << "entropy_alpha = " << num(c.sac.entropy_alpha) << "\n"
     << "batch_size = " << c.sac.batch_size << "\n"
     << "lr = " << num(c.sac.lr) << "\n"
     << "\n[hyper]\n"
     << "lambda_ofe = " << num(c.hyper.lambda_ofe) << "\n"
     << "lambda_rl = " << num(c.hyper.lambda_rl) << "\n"
     << "nu_ofe = " << num(c.hyper.nu_ofe) << "\n"
     << "nu_pi = " << num(c.hyper.nu_pi) << "\n"
     << "nu_v = " << num(c.hyper.nu_v) << "\n"
     << "nu_q = " << num(c.hyper.nu_q) << "\n"
     << "rho = " << num(c.hyper.rho) << "\n"
     << "theta_tol = " << num(c.hyper.theta_tol) << "\n"
     << "\n[arch]\n"
     << "units_o = " << widths_text(c.units_o) << "\n"
     << "units_oa = " << widths_text(c.units_oa) << "\n"
     << "hidden = " << widths_text(c.hidden) << "\n";
  return os.str();
}

CliResult parse_cli(int argc, const char* const* argv) {
  CLI::App app{"Train a pruned SAC agent with gated feature extractors on a toy environment"};
  RunConfig defaults;
  std::string config_path;
  std::string env;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  double nu_ofe = 0, nu_pi = 0, nu_v = 0, nu_q = 0, lambda_ofe = 0, lambda_rl = 0, rho = 0, tol = 0;
  std::string out_dir;

  app.add_option("--config", config_path, "Sectioned key-value config file")->check(CLI::ExistingFile);
  auto* o_env = app.add_option("--env", env, "Environment")->check(CLI::IsMember({"pendulum", "pointmass"}));
  auto* o_seed = app.add_option("--seed", seed, "Run seed");
  auto* o_steps = app.add_option("--steps", steps, "Total environment steps")->check(CLI::NonNegativeNumber);
  auto* o_nu_ofe = app.add_option("--nu-ofe", nu_ofe, "Complexity weight of the feature extractor")
                       ->check(CLI::NonNegativeNumber);
  auto* o_nu_pi = app.add_option("--nu-pi", nu_pi, "Complexity weight of the policy")->check(CLI::NonNegativeNumber);
  auto* o_nu_v = app.add_option("--nu-v", nu_v, "Complexity weight of V")->check(CLI::NonNegativeNumber);
  auto* o_nu_q = app.add_option("--nu-q", nu_q, "Complexity weight of Q1/Q2")->check(CLI::NonNegativeNumber);
  auto* o_l_ofe = app.add_option("--lambda-ofe", lambda_ofe, "L2 weight of the feature extractor")
                      ->check(CLI::NonNegativeNumber);
  auto* o_l_rl = app.add_option("--lambda-rl", lambda_rl, "L2 weight of the RL networks")
                     ->check(CLI::NonNegativeNumber);
  auto* o_rho = app.add_option("--rho", rho, "Weight of training-only complexity, in [0, 1]")
                    ->check(CLI::Range(0.0, 1.0));
  auto* o_tol = app.add_option("--theta-tol", tol, "Pruning tolerance, in (0, 0.5)");
  auto* o_out = app.add_option("--out-dir", out_dir, "Output directory (fallback: $OFEXI_OUT_DIR)");

  CliResult result;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    result.exit_early = true;
    result.message = app.help() + "\nDefault configuration:\n" + to_config_text(defaults);
    return result;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  RunConfig cfg = config_path.empty() ? defaults : load_config_file(config_path, defaults);
  if (o_env->count()) cfg.env = env;
  if (o_seed->count()) cfg.seed = seed;
  if (o_steps->count()) cfg.schedule.total_steps = steps;
  if (o_nu_ofe->count()) cfg.hyper.nu_ofe = nu_ofe;
  if (o_nu_pi->count()) cfg.hyper.nu_pi = nu_pi;
  if (o_nu_v->count()) cfg.hyper.nu_v = nu_v;
  if (o_nu_q->count()) cfg.hyper.nu_q = nu_q;
  if (o_l_ofe->count()) cfg.hyper.lambda_ofe = lambda_ofe;
  if (o_l_rl->count()) cfg.hyper.lambda_rl = lambda_rl;
  if (o_rho->count()) cfg.hyper.rho = rho;
  if (o_tol->count()) cfg.hyper.theta_tol = tol;
  if (o_out->count()) {
    cfg.out_dir = out_dir;
  } else if (const char* envdir = std::getenv("OFEXI_OUT_DIR");
             envdir != nullptr && *envdir != '\0' && cfg.out_dir == defaults.out_dir) {
    cfg.out_dir = envdir;
  }
  validate(cfg);
  result.cfg = cfg;
  return result;
}

}  // namespace ofexi
