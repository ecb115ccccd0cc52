#include "ofexi/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ofexi {

namespace {

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "step",   "eval_return",   "L_aux",         "C_OFE", "C_pi", "C_v",
      "C_q1",   "C_q2",          "params_deploy", "params_train",   "dR",
      "tR",     "theta_binary_fraction",           "units"};
  return cols;
}

void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows) {
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << g6(r.eval_return) << ',' << g6(r.l_aux) << ',' << g6(r.c_ofe) << ','
        << g6(r.c_pi) << ',' << g6(r.c_v) << ',' << g6(r.c_q1) << ',' << g6(r.c_q2) << ','
        << r.params_deploy << ',' << r.params_train << ',' << g6(r.dR) << ',' << g6(r.tR) << ','
        << g6(r.theta_binary_fraction) << ',' << r.units << '\n';
  }
}

void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_metrics(f, rows);
}

std::vector<MetricsRow> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics: missing header");
  if (split_csv(line) != metrics_columns()) throw std::runtime_error("metrics: unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != metrics_columns().size()) throw std::runtime_error("metrics: bad row width");
    MetricsRow r;
    r.step = std::stoll(c[0]);
    r.eval_return = std::stod(c[1]);
    r.l_aux = std::stod(c[2]);
    r.c_ofe = std::stod(c[3]);
    r.c_pi = std::stod(c[4]);
    r.c_v = std::stod(c[5]);
    r.c_q1 = std::stod(c[6]);
    r.c_q2 = std::stod(c[7]);
    r.params_deploy = std::stoll(c[8]);
    r.params_train = std::stoll(c[9]);
    r.dR = std::stod(c[10]);
    r.tR = std::stod(c[11]);
    r.theta_binary_fraction = std::stod(c[12]);
    r.units = c[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

ArchitectureReport architecture_report(const Trainer& trainer) {
  const Agent& a = trainer.agent();
  const OfeXiNet& ofe = a.ofe;
  ArchitectureReport r;
  r.networks.push_back({"phi_o", ofe.units_o(), param_count_phi_o(ofe)});
  r.networks.push_back({"phi_oa", ofe.units_oa(), param_count_phi_oa(ofe)});
  r.networks.push_back({"pred", {}, param_count_pred(ofe)});
  for (const MlpXiNet* net : {&a.pi, &a.v, &a.q1, &a.q2}) {
    r.networks.push_back({net->name, net->widths(), param_count(*net)});
  }
  const auto snap = trainer.snapshot();
  r.params_deploy = snap.params_deploy;
  r.params_train = snap.params_train;
  r.dR = snap.dR;
  r.tR = snap.tR;
  return r;
}

std::string architecture_json(const ArchitectureReport& r) {
  nlohmann::ordered_json j;
  for (const auto& n : r.networks) {
    Eigen::Index total = 0;
    for (auto u : n.units) total += u;
    j["networks"][n.network] = {
        {"units", n.units}, {"total_units", total}, {"params", n.params}};
  }
  j["params_deploy"] = r.params_deploy;
  j["params_train"] = r.params_train;
  j["dR"] = r.dR;
  j["tR"] = r.tR;
  return j.dump(2);
}

std::string architecture_table(const ArchitectureReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "network" << std::setw(28) << "units per layer" << std::right
     << std::setw(10) << "params" << '\n';
  for (const auto& n : r.networks) {
    std::string units;
    for (std::size_t i = 0; i < n.units.size(); ++i) {
      units += (i ? " " : "") + std::to_string(n.units[i]);
    }
    if (units.empty()) units = "-";
    os << std::left << std::setw(8) << n.network << std::setw(28) << units << std::right
       << std::setw(10) << n.params << '\n';
  }
  os << "deploy " << r.params_deploy << " (dR " << g6(r.dR) << ")  train " << r.params_train
     << " (tR " << g6(r.tR) << ")\n";
  return os.str();
}

void write_architecture_report(const std::string& path, const ArchitectureReport& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << architecture_json(r) << '\n';
}

}  // namespace ofexi
