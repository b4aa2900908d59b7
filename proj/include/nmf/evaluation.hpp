#pragma once

#include "nmf/controller.hpp"
#include "nmf/cost_model.hpp"
#include "nmf/network.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nmf {

enum class EpisodeMode { static_object, dynamic_object };

struct EpisodeConfig {
  EpisodeMode mode = EpisodeMode::static_object;
  int episodes = 50;
  int steps = 1000;
  std::uint64_t seed = 0;
  double success_translation = 0.02;  // m
  double success_rotation = 0.2;      // rad
  double start_distance = 0.3;        // initial gripper distance from the object origin, m
  double max_object_speed = 0.05;     // m/s, dynamic mode
  double max_object_yaw_rate = 0.2;   // rad/s, dynamic mode
  double placement_range = 0.1;       // object x/y placement half-range, m
  int approach_window = 50;           // final steps that must stay collision-free for a success

  void validate() const;
};

std::string to_string(EpisodeMode mode);
EpisodeMode episode_mode_from_string(const std::string& s);

/// Anchor minimizing pose_pair_distance to g; ties go to the lowest index.
Pose closest_anchor_grasp(const Pose& g, const AnchorGraspSet& anchors, const GripperModel& gm);

/// Object resting on the table plane z = 0: a box on one of its faces with
/// random yaw, a bowl upright or inverted.
Pose stable_object_pose(const ObjectShape& shape, double placement_range, Rng& rng);

struct EpisodeSetup {
  ScenePose scene;
  GripperState initial;
};

/// Initial conditions of episode `index`; depends only on (cfg.seed, index).
EpisodeSetup sample_episode(const ObjectShape& shape, const GripperModel& gm, const EpisodeConfig& cfg,
                            std::size_t index);

struct RolloutCurves {
  std::vector<double> rotation_mean;  // rad, per step
  std::vector<double> rotation_std;
  std::vector<double> translation_mean;  // m, per step
  std::vector<double> translation_std;
  std::vector<RolloutLog> episodes;  // per-episode traces, including aborted ones
  std::size_t failures = 0;          // aborted episodes, excluded from the statistics

  std::size_t steps() const { return translation_mean.size(); }
};

/// Episodes run in parallel (each one single-threaded inside) when exec is parallel.
RolloutCurves run_rollout_suite(const EpisodeConfig& cfg, const GraspCostModel& model, const ObjectShape& shape,
                                const AnchorGraspSet& anchors, const GripperModel& gm, const MpcConfig& mpc,
                                Execution exec = Execution::parallel);

/// Mean/std columns, one row per step.
void write_curves(const std::filesystem::path& path, const RolloutCurves& curves);
RolloutCurves read_curves(const std::filesystem::path& path);
/// Long format: episode, step, rotation error, translation error.
void write_episode_traces(const std::filesystem::path& path, const RolloutCurves& curves);

struct SuccessReport {
  std::size_t cases = 0;
  std::size_t successes = 0;
  std::vector<bool> outcome;

  double rate() const { return cases == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(cases); }
};

/// Success iff the final pose is within the thresholds of some anchor grasp and
/// the gripper stayed collision-free over the final approach window.
SuccessReport grasp_success_eval(const GraspCostModel& model, const ObjectShape& shape, const AnchorGraspSet& anchors,
                                 const GripperModel& gm, const MpcConfig& mpc, const EpisodeConfig& cfg,
                                 std::size_t cases, Execution exec = Execution::parallel);

struct CostMapGrid {
  Pose base;
  std::vector<double> xs;      // object-frame x of each column, m
  std::vector<double> ys;      // object-frame y of each row, m
  std::vector<double> values;  // predicted path length, row-major (y outer)

  double at(std::size_t ix, std::size_t iy) const { return values[iy * xs.size() + ix]; }
};

/// Grid axis from base - half_range to base + half_range in steps of resolution.
std::vector<double> grid_axis(double center, double half_range, double resolution);

/// The base grasp keeps its orientation; only its x/y translation is varied.
CostMapGrid export_cost_map(const ValueModel& model, const PointCloud& cloud, const Pose& base, double half_range_x,
                            double half_range_y, double resolution, Execution exec = Execution::parallel);
void write_cost_map(const std::filesystem::path& path, const CostMapGrid& grid);
CostMapGrid read_cost_map(const std::filesystem::path& path);

/// Anchor whose approach axis points most nearly straight down (top grasp).
std::size_t top_down_anchor_index(const AnchorGraspSet& anchors);

}  // namespace nmf
