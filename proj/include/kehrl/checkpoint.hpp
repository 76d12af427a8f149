#pragma once
// Checkpoints: a flat binary of 64-bit floats plus a JSON manifest listing
// (name, shape, byte offset), the run config echo, and the binary's digest.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kehrl/params.hpp"

namespace kehrl {

// Writes <prefix>.bin and <prefix>.json. Groups are (name_prefix, params);
// tensor names are serialized as "<group><param name>".
void save_checkpoint(const std::string& prefix,
                     const std::vector<std::pair<std::string, const ParamSet*>>& groups,
                     const std::string& config_json_text);

struct LoadedCheckpoint {
  std::map<std::string, Tensor> tensors;
  std::string config_json;
};

LoadedCheckpoint load_checkpoint(const std::string& prefix);

// Copies every tensor named "<group><param name>" into ps; throws on a
// missing name or shape mismatch.
void restore_params(ParamSet& ps, const std::string& group, const LoadedCheckpoint& ck);

}  // namespace kehrl
