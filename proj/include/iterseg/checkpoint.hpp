#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iterseg/network.hpp"

// Binary checkpoint, all integers and floats little-endian:
//
//   "ISEG"            4-byte magic
//   u16               format version (1)
//   u32               entry count
//   per entry:
//     u32             name length, followed by the name bytes
//     u32             rank, followed by rank x u32 dims
//     f32[...]        product(dims) values
//
// Entries are the parameters in topology order ("<layer>.weight", "<layer>.bias").
// Optimizer state is not stored.
namespace iterseg {

inline constexpr char kCheckpointMagic[4] = {'I', 'S', 'E', 'G'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

/// Writes float32 values; double parameters are narrowed.
template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::filesystem::path& path);

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

/// Reads a checkpoint and checks it against the topology of `config`.
template <typename T>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path, const NetworkConfig& config);

}  // namespace iterseg
