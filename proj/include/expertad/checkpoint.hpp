#pragma once

#include <string>
#include <vector>

#include "expertad/model.hpp"

namespace expertad {

/// Layout: "EXCK", u32 version, u64 value count, the values as little-endian
/// f64 in index order, then the JSON index (config echo, seed, and
/// name/rows/cols/offset per group), then the index byte length as u64.
std::vector<char> encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace expertad
