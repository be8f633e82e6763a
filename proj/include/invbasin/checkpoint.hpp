// Checkpoint files: a single JSON document holding the model config, every
// parameter tensor, the probabilistic placement, the run seed and the
// dataset normalization statistics. Round-trips are value-exact.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invbasin/data.hpp"
#include "invbasin/nn.hpp"

namespace invbasin {

struct InverseCheckpoint {
  InverseModel model;
  std::uint64_t seed = 0;
  NormStats norm;
  std::vector<std::string> driver_names;
  std::vector<std::string> static_names;
};

struct ForwardCheckpoint {
  ForwardModel model;
  std::uint64_t seed = 0;
  NormStats norm;
  std::string statics_source;  // "observed" or "reconstructed"
};

void save_checkpoint(const std::string& path, const InverseCheckpoint& ckpt);
InverseCheckpoint load_checkpoint(const std::string& path);

void save_forward_checkpoint(const std::string& path,
                             const ForwardCheckpoint& ckpt);
ForwardCheckpoint load_forward_checkpoint(const std::string& path);

}  // namespace invbasin
