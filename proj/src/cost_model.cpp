#include "nmf/cost_model.hpp"

#include <limits>

namespace nmf {

LearnedCost::LearnedCost(const ValueModel& model, const PointCloud& object_cloud, Execution exec)
    : path_(model.path, object_cloud), collision_(model.collision, object_cloud), exec_(exec) {}

void LearnedCost::evaluate(std::span<const Pose> poses, std::span<double> path_length,
                           std::span<double> collision_prob) const {
  const std::size_t n = poses.size();
  const auto blocks = static_cast<std::int64_t>((n + kBlock - 1) / kBlock);
  auto run_block = [&](std::int64_t b) {
    const std::size_t start = static_cast<std::size_t>(b) * kBlock;
    const std::size_t len = std::min(kBlock, n - start);
    const MatrixX<float> x = poses_matrix<float>(poses.subspan(start, len));
    path_.evaluate(x, path_length.subspan(start, len));
    collision_.evaluate(x, collision_prob.subspan(start, len));
  };
  if (exec_ == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    for (std::int64_t b = 0; b < blocks; ++b) run_block(b);
  }
}

OracleCost::OracleCost(ObjectShape shape, GripperModel gm, AnchorGraspSet anchors, int interpolation_steps)
    : shape_(std::move(shape)), gm_(std::move(gm)), anchors_(std::move(anchors)), steps_(interpolation_steps) {
  if (anchors_.size() == 0) throw PlanningError("oracle cost needs at least one anchor grasp");
  for (const auto& a : anchors_.grasps) anchor_images_.push_back(transform_keypoints(a, gm_));
}

void OracleCost::evaluate(std::span<const Pose> poses, std::span<double> path_length,
                          std::span<double> collision_prob) const {
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose& target = anchors_.grasps[closest_anchor_index(transform_keypoints(poses[i], gm_), anchor_images_)];
    path_length[i] = trajectory_path_length(interpolate_poses(poses[i], target, steps_), gm_);
    collision_prob[i] = gripper_in_collision(shape_, poses[i], gm_) ? 1.0 : 0.0;
  }
}

std::size_t closest_anchor_index(const Pose& g, const AnchorGraspSet& anchors, const GripperModel& gm) {
  if (anchors.size() == 0) throw PlanningError("closest anchor query on an empty anchor set");
  std::vector<std::vector<Vec3>> images;
  for (const auto& a : anchors.grasps) images.push_back(transform_keypoints(a, gm));
  return closest_anchor_index(transform_keypoints(g, gm), images);
}

std::size_t closest_anchor_index(std::span<const Vec3> image, std::span<const std::vector<Vec3>> anchor_images) {
  if (anchor_images.empty()) throw PlanningError("closest anchor query on an empty anchor set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < anchor_images.size(); ++i) {
    const double d = keypoint_image_distance(anchor_images[i], image);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace nmf
