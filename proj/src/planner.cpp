#include "nmf/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nmf {

void RrtConfig::validate() const {
  if (!(step_size > 0.0)) throw PlanningError("rrt step_size must be positive");
  if (!(goal_bias >= 0.0 && goal_bias <= 1.0)) throw PlanningError("rrt goal_bias must lie in [0, 1]");
  if (max_iterations < 1) throw PlanningError("rrt max_iterations must be >= 1");
  if (!(goal_tolerance >= 0.0)) throw PlanningError("rrt goal_tolerance must be >= 0");
  if (!(bounds.lo.array() <= bounds.hi.array()).all())
    throw PlanningError("rrt workspace bounds are inverted");
}

AnchorGraspSet AnchorGraspSet::subset(std::size_t k) const {
  if (k == grasps.size()) return *this;
  if (k == 0 || k > kFpsAnchorCount || grasps.size() < k)
    throw PlanningError("anchor subset size must be 1..16 or the full set");
  AnchorGraspSet out;
  out.grasps.assign(grasps.begin(), grasps.begin() + static_cast<std::ptrdiff_t>(k));
  out.source = k == kFpsAnchorCount ? AnchorSource::fps_16 : AnchorSource::subset;
  return out;
}

namespace {

constexpr double kFingertipReach = 0.112;

// Gripper frame: x = finger axis, z = approach direction.
Pose grasp_pose(const Vec3& finger_axis, const Vec3& approach, const Vec3& origin) {
  Mat3 m;
  m.col(0) = finger_axis;
  m.col(2) = approach;
  m.col(1) = approach.cross(finger_axis);
  return {Rotation::from_matrix(m), origin};
}

std::vector<Pose> box_candidates(const BoxShape& box) {
  std::vector<Pose> out;
  const Vec3& e = box.extents;
  for (int a = 0; a < 3; ++a) {
    for (double sign : {1.0, -1.0}) {
      const Vec3 normal = sign * Vec3::Unit(a);
      for (int f = 0; f < 3; ++f) {
        if (f == a) continue;
        const int t = 3 - a - f;
        for (double depth : {0.01, 0.02, 0.03}) {
          if (depth >= e[a]) continue;
          for (int i = 0; i < 9; ++i) {
            const double c = -0.4 * e[t] + 0.8 * e[t] * i / 8.0;
            const Vec3 origin = normal * (0.5 * e[a] + kFingertipReach - depth) + c * Vec3::Unit(t);
            out.push_back(grasp_pose(Vec3::Unit(f), -normal, origin));
          }
        }
      }
    }
  }
  return out;
}

std::vector<Pose> bowl_candidates(const BowlShape& bowl) {
  std::vector<Pose> out;
  const double rho = 0.5 * (bowl.inner_radius + bowl.outer_radius);
  constexpr int kAngles = 48;
  for (int i = 0; i < kAngles; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / kAngles;
    const Vec3 radial(std::cos(theta), std::sin(theta), 0.0);
    for (double depth : {0.01, 0.02}) {
      const Vec3 origin = rho * radial + Vec3(0.0, 0.0, bowl.rim_z() + kFingertipReach - depth);
      out.push_back(grasp_pose(radial, -Vec3::UnitZ(), origin));
    }
  }
  return out;
}

}  // namespace

std::vector<Pose> anchor_grasp_candidates(const ObjectShape& shape, const GripperModel& gm) {
  std::vector<Pose> all = shape.is_box() ? box_candidates(std::get<BoxShape>(shape.geometry))
                                         : bowl_candidates(std::get<BowlShape>(shape.geometry));
  std::vector<Pose> free;
  for (const auto& p : all)
    if (!gripper_in_collision(shape, p, gm)) free.push_back(p);
  return free;
}

AnchorGraspSet generate_anchor_grasps(const ObjectShape& shape, const GripperModel& gm,
                                      std::uint64_t seed) {
  const std::vector<Pose> candidates = anchor_grasp_candidates(shape, gm);
  if (candidates.size() < kFpsAnchorCount)
    throw PlanningError("object admits too few grasps: '" + shape.object_id + "'");
  PointCloud centers{Eigen::Matrix3Xd(3, static_cast<Eigen::Index>(candidates.size()))};
  for (std::size_t i = 0; i < candidates.size(); ++i)
    centers.points.col(static_cast<Eigen::Index>(i)) = candidates[i].translation;
  const auto picks = farthest_point_sample(centers, kFpsAnchorCount, seed);

  AnchorGraspSet set;
  set.source = AnchorSource::flipped_32;
  for (std::size_t idx : picks) set.grasps.push_back(candidates[idx]);
  const Pose flip{Rotation::rz(std::numbers::pi), Vec3::Zero()};
  for (std::size_t i = 0; i < kFpsAnchorCount; ++i)
    set.grasps.push_back(compose_poses(set.grasps[i], flip));
  return set;
}

Pose random_pose_in(const WorkspaceBounds& bounds, Rng& rng) {
  Vec3 t;
  for (int k = 0; k < 3; ++k) t[k] = uniform(rng, bounds.lo[k], bounds.hi[k]);
  return {random_rotation(rng), t};
}

Pose sample_start_pose(const ObjectShape& shape, const GripperModel& gm,
                       const WorkspaceBounds& bounds, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Pose p = random_pose_in(bounds, rng);
    if (!gripper_in_collision(shape, p, gm)) return p;
  }
  throw PlanningError("workspace too constrained");
}

bool edge_collision_free(const Pose& a, const Pose& b, const ObjectShape& shape,
                         const GripperModel& gm, double resolution) {
  // Swept check: a sphere centre c moves at most |dT| + theta |c| per unit of s,
  // so advancing by clearance / speed cannot skip over the object.
  constexpr double kMinClearance = 1e-4;
  const double d = pose_pair_distance(a, b, gm);
  const double max_ds = d > 0.0 ? resolution / d : 1.0;
  const double dt = (b.translation - a.translation).norm();
  const double theta = pose_errors(a, b).rotation;
  double s = 0.0;
  while (true) {
    const Pose p = interpolate_pose(a, b, s);
    double ds = max_ds;
    for (const auto& sph : gm.collision_spheres) {
      const double clearance = sdf_query(shape, p.apply(sph.center)) - sph.radius;
      if (clearance < kMinClearance) return false;
      const double speed = dt + theta * sph.center.norm();
      if (speed > 0.0) ds = std::min(ds, clearance / speed);
    }
    if (s >= 1.0) return true;
    s = std::min(1.0, s + ds);
  }
}

namespace {

class Tree {
 public:
  explicit Tree(const GripperModel& gm) : gm_(gm), m_(gm.keypoints.size()) {}

  std::size_t add(const Pose& p, std::size_t parent) {
    poses_.push_back(p);
    parents_.push_back(parent);
    for (const auto& x : gm_.keypoints) images_.push_back(p.apply(x));
    return poses_.size() - 1;
  }

  std::size_t nearest(const Pose& target) const {
    const auto img = transform_keypoints(target, gm_);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poses_.size(); ++i) {
      const double d = keypoint_image_distance(std::span(images_).subspan(i * m_, m_), img);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  const Pose& pose(std::size_t i) const { return poses_[i]; }
  std::size_t parent(std::size_t i) const { return parents_[i]; }

 private:
  const GripperModel& gm_;
  std::size_t m_;
  std::vector<Pose> poses_;
  std::vector<std::size_t> parents_;
  std::vector<Vec3> images_;
};

constexpr std::size_t kRoot = std::numeric_limits<std::size_t>::max();

Pose steer(const Pose& from, const Pose& to, double step, const GripperModel& gm) {
  const double d = pose_pair_distance(from, to, gm);
  if (d <= step) return to;
  return interpolate_pose(from, to, step / d);
}

Trajectory backtrack(const Tree& tree, std::size_t leaf) {
  Trajectory traj;
  for (std::size_t i = leaf; i != kRoot; i = tree.parent(i)) traj.waypoints.push_back(tree.pose(i));
  return traj;
}

}  // namespace

Trajectory rrt_plan(const Pose& start, const Pose& goal, const ObjectShape& shape,
                    const GripperModel& gm, const RrtConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (gripper_in_collision(shape, start, gm)) throw PlanningError("rrt start pose is in collision");
  if (gripper_in_collision(shape, goal, gm)) throw PlanningError("rrt goal pose is in collision");
  if (pose_pair_distance(start, goal, gm) <= cfg.goal_tolerance) return {{start}};

  // Bidirectional: one tree grows from the start, one from the grasp. Grasps
  // sit in narrow passages that a single start-rooted tree rarely enters.
  Rng rng = make_stream(seed, {0x4a7});
  const double resolution = cfg.step_size / 4.0;
  Tree start_tree(gm);
  Tree goal_tree(gm);
  start_tree.add(start, kRoot);
  goal_tree.add(goal, kRoot);
  Tree* a = &start_tree;
  Tree* b = &goal_tree;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Pose target = uniform(rng, 0.0, 1.0) < cfg.goal_bias ? b->pose(0) : random_pose_in(cfg.bounds, rng);
    const std::size_t near = a->nearest(target);
    const Pose next = steer(a->pose(near), target, cfg.step_size, gm);
    if (edge_collision_free(a->pose(near), next, shape, gm, resolution)) {
      const std::size_t added = a->add(next, near);
      // Connect: extend the other tree greedily toward the new node.
      std::size_t idx = b->nearest(next);
      for (;;) {
        const Pose step = steer(b->pose(idx), next, cfg.step_size, gm);
        if (!edge_collision_free(b->pose(idx), step, shape, gm, resolution)) break;
        idx = b->add(step, idx);
        if (pose_pair_distance(step, next, gm) <= cfg.goal_tolerance) {
          const bool a_is_start = a == &start_tree;
          const std::size_t s_leaf = a_is_start ? added : idx;
          const std::size_t g_leaf = a_is_start ? idx : added;
          Trajectory to_goal = backtrack(goal_tree, g_leaf);  // leaf ... goal
          Trajectory to_start = backtrack(start_tree, s_leaf);  // leaf ... start
          Trajectory out;
          out.waypoints.assign(to_goal.waypoints.rbegin(), to_goal.waypoints.rend());
          out.waypoints.insert(out.waypoints.end(), to_start.waypoints.begin() + 1, to_start.waypoints.end());
          return out;
        }
      }
    }
    std::swap(a, b);
  }
  throw PlanningError("no path found");
}

Trajectory densify_trajectory(const Trajectory& traj, const GripperModel& gm, double max_spacing) {
  if (traj.waypoints.empty()) return traj;
  Trajectory out;
  out.waypoints.push_back(traj.waypoints.front());
  for (std::size_t i = 0; i + 1 < traj.waypoints.size(); ++i) {
    const Pose& a = traj.waypoints[i];
    const Pose& b = traj.waypoints[i + 1];
    const double d = pose_pair_distance(a, b, gm);
    int steps = std::max(2, static_cast<int>(std::ceil(d / max_spacing)) + 1);
    for (;;) {
      Trajectory seg = interpolate_poses(a, b, steps);
      bool ok = true;
      for (std::size_t j = 0; j + 1 < seg.waypoints.size() && ok; ++j)
        ok = pose_pair_distance(seg.waypoints[j], seg.waypoints[j + 1], gm) <= max_spacing;
      if (ok) {
        out.waypoints.insert(out.waypoints.end(), seg.waypoints.begin() + 1, seg.waypoints.end());
        break;
      }
      ++steps;
    }
  }
  return out;
}

std::vector<WaypointLabel> label_trajectory(const Trajectory& traj, const GripperModel& gm) {
  std::vector<WaypointLabel> labels;
  labels.reserve(traj.waypoints.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < traj.waypoints.size(); ++i) {
    if (i > 0) cumulative += pose_pair_distance(traj.waypoints[i - 1], traj.waypoints[i], gm);
    labels.push_back({i, cumulative});
  }
  return labels;
}

}  // namespace nmf
