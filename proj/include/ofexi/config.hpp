#pragma once

#include <string>

#include "ofexi/trainer.hpp"

namespace ofexi {

/// Sectioned key-value text:
///
///   # comment
///   [hyper]
///   nu_ofe = 1e-4
///   [arch]
///   units_o = 16, 16
///
/// Unknown sections or keys and malformed values raise ConfigError.
void apply_config_text(const std::string& text, RunConfig& cfg);
RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// Every field in the format accepted by apply_config_text.
std::string to_config_text(const RunConfig& cfg);

struct CliResult {
  RunConfig cfg;
  bool exit_early = false;  // --help was requested
  std::string message;
};

/// Flags override values from --config. OFEXI_OUT_DIR is used when
/// --out-dir is absent from both. Throws ConfigError on any usage error.
CliResult parse_cli(int argc, const char* const* argv);

}  // namespace ofexi
