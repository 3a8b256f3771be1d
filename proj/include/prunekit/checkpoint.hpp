#pragma once

#include <map>
#include <string>

#include "prunekit/schemes.hpp"

namespace prunekit {

struct CheckpointData {
    Network net;
    MaskSet masks;
    std::map<std::string, std::string> metadata;
};

// Binary checkpoint, little-endian throughout:
//   magic "ACMP", version u32 = 1, tensor count u32,
//   per tensor: name length u16, UTF-8 name, rank u8, dims u64 each,
//   payload as f64; then the mask section in the same layout with one byte
//   per element; then metadata byte length u32 + UTF-8 key=value lines.
// Layer structure is carried in reserved metadata keys so load reconstructs
// the network exactly; roundtrips are bit-identical.
void save_checkpoint(const Network& net, const MaskSet& masks,
                     const std::map<std::string, std::string>& metadata,
                     const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace prunekit
