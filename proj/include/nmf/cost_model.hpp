#pragma once

#include "nmf/network.hpp"
#include "nmf/parallel.hpp"
#include "nmf/planner.hpp"

#include <span>
#include <vector>

namespace nmf {

/// Path-length and collision-probability queries for gripper poses expressed
/// in the object frame. Implementations must be safe to call concurrently.
class GraspCostModel {
 public:
  virtual ~GraspCostModel() = default;
  virtual void evaluate(std::span<const Pose> poses, std::span<double> path_length,
                        std::span<double> collision_prob) const = 0;
};

/// The learned value function, specialized to one object cloud. Queries are
/// evaluated in fixed blocks of poses so results do not depend on the worker
/// count.
class LearnedCost final : public GraspCostModel {
 public:
  LearnedCost(const ValueModel& model, const PointCloud& object_cloud, Execution exec = Execution::parallel);
  void evaluate(std::span<const Pose> poses, std::span<double> path_length,
                std::span<double> collision_prob) const override;

  static constexpr std::size_t kBlock = 256;

 private:
  BranchEvaluator<float> path_;
  BranchEvaluator<float> collision_;
  Execution exec_;
};

/// Ground truth stand-in for the learned model: path length of the straight
/// SE(3) interpolation to the closest anchor grasp, collision from the SDF.
class OracleCost final : public GraspCostModel {
 public:
  OracleCost(ObjectShape shape, GripperModel gm, AnchorGraspSet anchors, int interpolation_steps = 8);
  void evaluate(std::span<const Pose> poses, std::span<double> path_length,
                std::span<double> collision_prob) const override;

 private:
  ObjectShape shape_;
  GripperModel gm_;
  AnchorGraspSet anchors_;
  std::vector<std::vector<Vec3>> anchor_images_;
  int steps_;
};

/// Index of the anchor minimizing pose_pair_distance; ties go to the lowest index.
std::size_t closest_anchor_index(const Pose& g, const AnchorGraspSet& anchors, const GripperModel& gm);
/// Same query against precomputed anchor keypoint images.
std::size_t closest_anchor_index(std::span<const Vec3> image, std::span<const std::vector<Vec3>> anchor_images);

}  // namespace nmf
