#pragma once

#include <cstdint>
#include <string>

#include "thn/params.hpp"

namespace thn {

// Flat binary checkpoint. Layout: magic "THNK", format version u32, then one
// record per tensor: name length u32, UTF-8 name, shape rank u32, dims u32
// each, fp64 values little-endian. Model parameters keep their own names;
// optimizer state is stored under "__momentum.<name>" and scalar metadata
// under "__meta.<key>".
struct Checkpoint {
  int epoch = -1;  // last completed epoch, -1 for a fresh store
  std::uint32_t config_hash = 0;
  ParamStore params;
  ParamStore momentum;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace thn
