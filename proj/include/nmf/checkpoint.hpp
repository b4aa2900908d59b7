#pragma once

#include "nmf/network.hpp"

#include <filesystem>
#include <stdexcept>

namespace nmf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic "NMF1", u32 version, then per branch (path, collision):
/// u32 encoder layer count, u32 head layer count, (u32 rows, u32 cols) per
/// layer; then every parameter as little-endian f32, path branch first, layers
/// in order, weights row-major followed by the bias.
void save_checkpoint(const ValueModel& model, const std::filesystem::path& path);
ValueModel load_checkpoint(const std::filesystem::path& path);

}  // namespace nmf
