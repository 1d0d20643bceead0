#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oct1d/tape.hpp"

namespace oct1d {

// Flat little-endian parameter snapshot:
//   magic "O1DP" | u32 version | u32 count
//   per entry: u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 values
inline constexpr char kSnapshotMagic[4] = {'O', '1', 'D', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

std::vector<std::uint8_t> encode_snapshot(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_snapshot(const std::vector<std::uint8_t>& bytes);

void save_parameters(const ParameterStore& store, const std::filesystem::path& path);
/// Every stored entry must match a parameter by name and shape.
void load_parameters(ParameterStore& store, const std::filesystem::path& path);

}  // namespace oct1d
