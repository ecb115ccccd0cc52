#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "ofexi/trainer.hpp"

namespace ofexi {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary container: magic, version, payload length, payload, FNV-1a checksum.
/// The payload holds the run config, every Param with its Adam moments, BN
/// statistics, gate states, the replay buffer, env and rng states and the
/// step counter.
std::string serialize(const Trainer& t);
std::unique_ptr<Trainer> deserialize(const std::string& bytes);

void save_checkpoint(const Trainer& t, const std::string& path);
/// Throws CheckpointError on version mismatch, truncation or a bad checksum.
std::unique_ptr<Trainer> load_checkpoint(const std::string& path);

}  // namespace ofexi
