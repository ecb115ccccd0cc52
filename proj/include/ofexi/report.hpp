#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ofexi/trainer.hpp"

namespace ofexi {

/// Column order of the metrics CSV.
const std::vector<std::string>& metrics_columns();

/// Floats are written with 6 significant digits.
void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(std::istream& in);

struct LayerUnits {
  std::string network;
  std::vector<Eigen::Index> units;
  std::int64_t params = 0;
};

struct ArchitectureReport {
  std::vector<LayerUnits> networks;  // phi_o, phi_oa, pred, pi, v, q1, q2
  std::int64_t params_deploy = 0;
  std::int64_t params_train = 0;
  double dR = 1.0;
  double tR = 1.0;
};

ArchitectureReport architecture_report(const Trainer& trainer);
std::string architecture_json(const ArchitectureReport& r);
std::string architecture_table(const ArchitectureReport& r);
void write_architecture_report(const std::string& path, const ArchitectureReport& r);

}  // namespace ofexi
