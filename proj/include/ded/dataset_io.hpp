#pragma once

#include "ded/types.hpp"

#include <filesystem>
#include <istream>
#include <ostream>

namespace ded::data {

inline constexpr std::uint32_t kDatasetVersion = 1;

// Binary container: magic, version, id, dt, window lengths, then scenes.
// Doubles are stored bit-for-bit, so write(read(f)) reproduces f exactly.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace ded::data
