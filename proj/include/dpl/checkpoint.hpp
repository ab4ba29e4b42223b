#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dpl/mlp.hpp"

namespace dpl {

// Parameter checkpoint, little-endian binary:
//   bytes 0..7   magic "DPLCKPT1"
//   u64          layer count L
//   L x (u64 d_in, u64 d_out)
//   L x (d_in*d_out doubles row-major weight, d_out doubles bias)
// A JSON sidecar (<path>.json) carries architecture metadata plus any extra
// key/value entries the caller supplies.
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params,
                     const std::map<std::string, std::string>& extra = {});

MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dpl
