#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srlm/params.hpp"

namespace srlm {

// Self-describing binary container: magic, format version, config echo, seed
// and config hash, then named f64 blocks. Byte order is little-endian; the
// writer refuses to run on big-endian hosts rather than emit swapped data.
struct Checkpoint {
  std::uint32_t version = 1;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string config_echo;
  std::vector<ParamBlock> blocks;

  bool has(const std::string& name) const;
  const Eigen::MatrixXd& block(const std::string& name) const;

  ModelParams to_params(const std::vector<std::string>& skip_prefixes = {"__"}) const;
  static Checkpoint from_params(const ModelParams& params);
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace srlm
