#pragma once

#include "nmf/controller.hpp"
#include "nmf/dataset.hpp"
#include "nmf/evaluation.hpp"
#include "nmf/network.hpp"
#include "nmf/training.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostMapConfig {
  double half_range_x = 0.1;  // m
  double half_range_y = 0.1;
  double resolution = 0.01;
};

struct GraspEvalConfig {
  int cases = 10;
  int budget_steps = 1500;  // 30 s at dt = 0.02
};

struct AblationConfig {
  std::vector<double> fractions{0.05, 0.1, 1.0};
  std::vector<int> anchor_counts{2, 16, 32};
};

/// One experiment: objects, gripper and every stage configuration.
struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::vector<ObjectShape> objects;
  std::string object;  // object_id the experiment runs on
  GripperModel gripper = GripperModel::parallel_jaw();
  int cloud_points = 256;
  DatasetConfig dataset;
  std::size_t heldout_trajectories = 500;
  NetworkShape network;
  TrainConfig train;
  MpcConfig mpc;
  EpisodeConfig episode;
  GraspEvalConfig grasp;
  CostMapConfig costmap;
  AblationConfig ablation;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
  const ObjectShape& target_object() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON text; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& cfg);
/// FNV-1a over the canonical text.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace nmf
