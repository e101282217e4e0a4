#include "quisg/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace quisg::io {

namespace {

constexpr char kMagic[4] = {'Q', 'S', 'T', 'F'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  // Host is little-endian on every supported target.
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::filesystem::path& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    throw ParseError("truncated tensor file: " + path.string());
  }
  return v;
}

}  // namespace

void write_tensors(const std::filesystem::path& path,
                   const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kTensorFileVersion);
  write_pod<std::uint64_t>(os, tensors.size());
  for (const NamedTensor& t : tensors) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint32_t>(os, 2);
    write_pod<std::uint64_t>(os, t.shape.rows);
    write_pod<std::uint64_t>(os, t.shape.cols);
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!os) throw ParseError("write failed: " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("bad magic in tensor file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kTensorFileVersion) {
    throw ParseError("unsupported tensor file version " +
                     std::to_string(version) + ": " + path.string());
  }
  const auto count = read_pod<std::uint64_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = read_pod<std::uint32_t>(is, path);
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(is, path);
    if (rank != 2) {
      throw ParseError("unsupported tensor rank " + std::to_string(rank) +
                       " in " + path.string());
    }
    t.shape.rows = read_pod<std::uint64_t>(is, path);
    t.shape.cols = read_pod<std::uint64_t>(is, path);
    t.values.resize(t.shape.size());
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!is) throw ParseError("truncated tensor file: " + path.string());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace quisg::io
