// Parameter checkpoints: textual name -> shape -> values listing.
// Values are written as hexfloats so save -> load -> save is bit-identical.

#pragma once

#include <string>
#include <vector>

#include "af/diff.hpp"

namespace af {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const std::vector<const ParamBlock*>& blocks);

/// Loads values into the given blocks; names and shapes must match exactly.
void load_checkpoint(const std::string& path, const std::vector<ParamBlock*>& blocks);

}  // namespace af
