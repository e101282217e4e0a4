#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "quisg/tensor.hpp"

namespace quisg::io {

// Named-tensor binary container: magic "QSTF", u32 version, u64 count, then
// per entry u32 name length, name bytes, u32 rank (always 2), u64 dims,
// f64 values. All integers and floats little-endian. Used for parameter
// checkpoints and precomputed-embedding files.
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Shape shape;
  std::vector<double> values;
};

void write_tensors(const std::filesystem::path& path,
                   const std::vector<NamedTensor>& tensors);

// Throws ParseError on bad magic/version/truncation.
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

}  // namespace quisg::io
