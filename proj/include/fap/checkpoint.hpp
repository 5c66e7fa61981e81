#pragma once

#include <filesystem>

#include "fap/model.hpp"

// Binary checkpoint, all integers and floats little-endian:
//
//   magic      8 bytes  "FAPCKPT\0"
//   version    u32      1
//   meta_len   u32      length of the JSON model description that follows
//   meta       bytes    {"encoder":{"widths":[..],"channels":C,"image_size":S},
//                        "head":"proto"|"relation","relation_hidden":H,
//                        "input_norm":{"mean":M,"std":S}}
//   count      u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (UTF-8)
//     rank     u32, dims rank x u64
//     values   prod(dims) x f64 (IEEE-754 binary64)
namespace fap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace fap
