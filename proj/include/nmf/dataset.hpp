#pragma once

#include "nmf/parallel.hpp"
#include "nmf/planner.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmf {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// waypoint_index value marking a uniformly sampled collision-supervision pose.
inline constexpr std::uint16_t kRandomPoseIndex = 0xFFFF;
/// path_length value of records that carry no path-length label.
inline constexpr float kNoPathLabel = -1.0f;
/// Packed little-endian record size on disk.
inline constexpr std::size_t kRecordBytes = 2 + 4 + 2 + 9 * 4 + 4 + 1;

struct TrajectoryRecord {
  std::uint16_t object_index = 0;
  std::uint32_t trajectory_id = 0;
  std::uint16_t waypoint_index = 0;
  std::array<float, 9> pose{};
  float path_length = 0.0f;
  std::uint8_t collision_label = 0;

  bool has_path_label() const { return waypoint_index != kRandomPoseIndex; }
  bool operator==(const TrajectoryRecord&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::string object_id;
  std::uint64_t count = 0;
  double phi = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t gripper_hash = 0;
  std::uint64_t trajectories_requested = 0;
  std::uint64_t trajectories_kept = 0;
  std::uint64_t anchor_count = 0;

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<TrajectoryRecord> records;
};

struct DatasetConfig {
  std::size_t n_trajectories = 0;
  RrtConfig rrt;
  double phi = 1.0;
  double waypoint_spacing = 0.01;
  int random_poses_per_trajectory = 4;

  void validate() const;
};

/// Records produced by one trajectory index; empty when planning failed or the
/// start pose exceeded phi.
struct TrajectoryOutcome {
  std::vector<TrajectoryRecord> records;
  bool planned = false;
  bool kept = false;
};

/// Pure function of (seed, trajectory_id): anchor pick, start sample, plan,
/// densify, label, phi filter, collision supervision poses.
TrajectoryOutcome generate_trajectory(std::uint32_t trajectory_id, const ObjectShape& shape,
                                      const GripperModel& gm, const AnchorGraspSet& anchors,
                                      const DatasetConfig& cfg, std::uint64_t seed);

Dataset build_dataset(const ObjectShape& shape, const GripperModel& gm,
                      const AnchorGraspSet& anchors, const DatasetConfig& cfg,
                      std::uint64_t seed, Execution exec = Execution::parallel);

/// Keep only the records of a fraction of kept trajectories (first by id).
Dataset subsample_trajectories(const Dataset& ds, double fraction);

std::filesystem::path manifest_path(const std::filesystem::path& stem);
std::filesystem::path records_path(const std::filesystem::path& stem);

/// Writes <stem>.manifest (key=value text) and <stem>.bin (packed records).
void write_dataset(const std::filesystem::path& stem, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& stem);

void encode_record(const TrajectoryRecord& r, unsigned char* out);
TrajectoryRecord decode_record(const unsigned char* in);

}  // namespace nmf
