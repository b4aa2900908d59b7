#pragma once

#include "nmf/geometry.hpp"
#include "nmf/random.hpp"
#include "nmf/scene.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nmf {

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AnchorSource { fps_16, flipped_32, subset };

/// Goal grasps in the object frame. For flipped_32, entries 16..31 are
/// entries 0..15 right-composed with Rz(180°).
struct AnchorGraspSet {
  std::vector<Pose> grasps;
  AnchorSource source = AnchorSource::flipped_32;

  std::size_t size() const { return grasps.size(); }
  /// Subset used by the anchor-count ablation: the FPS-order prefix of size k
  /// (k <= 16), or the full flipped set for k == 32.
  AnchorGraspSet subset(std::size_t k) const;
};

inline constexpr std::size_t kFpsAnchorCount = 16;

struct WorkspaceBounds {
  Vec3 lo = Vec3::Constant(-0.4);
  Vec3 hi = Vec3::Constant(0.4);

  static WorkspaceBounds cube(const Vec3& center, double edge) {
    return {center - Vec3::Constant(edge / 2), center + Vec3::Constant(edge / 2)};
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  /// Euclidean distance from p to the box (0 inside).
  double outside_distance(const Vec3& p) const {
    return (lo - p).cwiseMax(p - hi).cwiseMax(0.0).norm();
  }
};

struct RrtConfig {
  double step_size = 0.05;  // pose_pair_distance units (m)
  double goal_bias = 0.1;
  int max_iterations = 5000;
  WorkspaceBounds bounds = WorkspaceBounds::cube(Vec3::Zero(), 0.8);
  double goal_tolerance = 1e-3;

  void validate() const;
};

/// Antipodal candidates, collision filtering, FPS down to 16, then 180° z-flips to 32.
AnchorGraspSet generate_anchor_grasps(const ObjectShape& shape, const GripperModel& gm,
                                      std::uint64_t seed);
/// All collision-free antipodal candidates before FPS (exposed for testing).
std::vector<Pose> anchor_grasp_candidates(const ObjectShape& shape, const GripperModel& gm);

Pose random_pose_in(const WorkspaceBounds& bounds, Rng& rng);

/// Uniform translation in bounds with uniform rotation, resampled until collision-free.
Pose sample_start_pose(const ObjectShape& shape, const GripperModel& gm,
                       const WorkspaceBounds& bounds, Rng& rng);

/// Bidirectional RRT (RRT-Connect) in the SE(3) space of the free gripper. Waypoints are returned goal
/// first (g_0 = goal) and start last.
Trajectory rrt_plan(const Pose& start, const Pose& goal, const ObjectShape& shape,
                    const GripperModel& gm, const RrtConfig& cfg, std::uint64_t seed);

/// Continuous collision check of the straight SE(3) edge a -> b, sampled no
/// coarser than resolution. Edges passing within 0.1 mm of the object count as blocked.
bool edge_collision_free(const Pose& a, const Pose& b, const ObjectShape& shape,
                         const GripperModel& gm, double resolution);

/// Interpolate every edge so adjacent waypoints are at most max_spacing apart.
Trajectory densify_trajectory(const Trajectory& traj, const GripperModel& gm, double max_spacing);

struct WaypointLabel {
  std::size_t waypoint_index = 0;
  double path_length = 0.0;
};

/// Cumulative path length of every waypoint measured from g_0.
std::vector<WaypointLabel> label_trajectory(const Trajectory& traj, const GripperModel& gm);

}  // namespace nmf
