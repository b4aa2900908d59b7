#include "nmf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace nmf {

namespace {

constexpr double kValidationTolerance = 1e-6;
constexpr double kDriftTolerance = 1e-9;

double max_abs_drift(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace

Rotation Rotation::from_matrix(const Mat3& m) {
  if (!m.allFinite()) throw GeometryError("rotation matrix has non-finite entries");
  if (max_abs_drift(m) > kValidationTolerance)
    throw GeometryError("rotation matrix is not orthonormal");
  if (std::abs(m.determinant() - 1.0) > kValidationTolerance)
    throw GeometryError("rotation matrix has determinant != +1");
  return Rotation(m, Unchecked{});
}

Rotation Rotation::about_axis(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) throw GeometryError("rotation axis is the zero vector");
  return Rotation(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix(), Unchecked{});
}

Rotation Rotation::exp(const Vec3& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-300) return Rotation();
  return Rotation(Eigen::AngleAxisd(angle, rotation_vector / angle).toRotationMatrix(),
                  Unchecked{});
}

Rotation Rotation::operator*(const Rotation& other) const {
  Mat3 m = mat_ * other.mat_;
  if (max_abs_drift(m) > kDriftTolerance) return reorthogonalize(m);
  return Rotation(m, Unchecked{});
}

double Rotation::orthonormality_drift() const { return max_abs_drift(mat_); }

Rotation reorthogonalize(const Mat3& m) {
  Vec3 b1 = m.col(0).normalized();
  Vec3 b2 = (m.col(1) - b1.dot(m.col(1)) * b1).normalized();
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b1.cross(b2);
  return Rotation(out, Rotation::Unchecked{});
}

GripperModel GripperModel::parallel_jaw() {
  GripperModel gm;
  gm.keypoints = {
      {0.0, 0.0, 0.0},
      {0.04, 0.0, 0.066},
      {-0.04, 0.0, 0.066},
      {0.04, 0.0, 0.112},
      {-0.04, 0.0, 0.112},
  };
  gm.collision_spheres = {
      {{0.0, 0.0, 0.02}, 0.025},
      {{-0.02, 0.0, 0.066}, 0.01},
      {{0.0, 0.0, 0.066}, 0.01},
      {{0.02, 0.0, 0.066}, 0.01},
  };
  for (double x : {0.04, -0.04})
    for (double z : {0.066, 0.089, 0.112}) gm.collision_spheres.push_back({{x, 0.0, z}, 0.01});
  return gm;
}

void GripperModel::validate() const {
  if (keypoints.empty()) throw GeometryError("gripper model needs at least one keypoint");
  for (const auto& s : collision_spheres) {
    if (!(s.radius > 0.0)) throw GeometryError("collision sphere radius must be positive");
    if (!s.center.allFinite()) throw GeometryError("collision sphere center is not finite");
  }
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (!keypoints[i].allFinite()) throw GeometryError("gripper keypoint is not finite");
    for (std::size_t j = i + 1; j < keypoints.size(); ++j)
      if (keypoints[i] == keypoints[j]) throw GeometryError("gripper keypoints must be distinct");
  }
}

std::uint64_t GripperModel::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<double>(keypoints.size()));
  for (const auto& k : keypoints)
    for (int i = 0; i < 3; ++i) mix(k[i]);
  mix(static_cast<double>(collision_spheres.size()));
  for (const auto& s : collision_spheres) {
    for (int i = 0; i < 3; ++i) mix(s.center[i]);
    mix(s.radius);
  }
  return h;
}

Pose compose_poses(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose invert_pose(const Pose& p) {
  Rotation inv = p.rotation.inverse();
  return {inv, -(inv * p.translation)};
}

Rotation rot6d_to_rotation(const Rot6D& r) {
  const double n1 = r.a1.norm();
  if (!(n1 > 0.0) || !r.a2.allFinite() || !std::isfinite(n1))
    throw GeometryError("degenerate 6D rotation");
  Vec3 b1 = r.a1 / n1;
  Vec3 perp = r.a2 - b1.dot(r.a2) * b1;
  const double n2 = perp.norm();
  // Parallel inputs leave a perpendicular residue below sin(1e-6) * |a2|.
  if (!(n2 > std::sin(1e-6) * r.a2.norm()) || n2 == 0.0)
    throw GeometryError("degenerate 6D rotation");
  Vec3 b2 = perp / n2;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return Rotation::from_matrix(m);
}

Vec9 pose_to_vec9(const Pose& p) {
  Vec9 v;
  v.segment<3>(0) = p.rotation.column(0);
  v.segment<3>(3) = p.rotation.column(1);
  v.segment<3>(6) = p.translation;
  return v;
}

Pose vec9_to_pose(const Vec9& v) {
  return {rot6d_to_rotation({v.segment<3>(0), v.segment<3>(3)}), v.segment<3>(6)};
}

std::vector<Vec3> transform_keypoints(const Pose& p, const GripperModel& gm) {
  std::vector<Vec3> out;
  out.reserve(gm.keypoints.size());
  for (const auto& x : gm.keypoints) out.push_back(p.apply(x));
  return out;
}

double keypoint_image_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

double pose_pair_distance(const Pose& a, const Pose& b, const GripperModel& gm) {
  double sum = 0.0;
  for (const auto& x : gm.keypoints) sum += (a.apply(x) - b.apply(x)).norm();
  return sum / static_cast<double>(gm.keypoints.size());
}

double trajectory_path_length(const Trajectory& traj, const GripperModel& gm) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < traj.waypoints.size(); ++i)
    total += pose_pair_distance(traj.waypoints[i], traj.waypoints[i + 1], gm);
  return total;
}

Rotation slerp(const Rotation& a, const Rotation& b, double s) {
  const Rotation rel = a.inverse() * b;
  Eigen::AngleAxisd aa(rel.matrix());
  return a * Rotation::exp(aa.axis() * (aa.angle() * s));
}

Pose interpolate_pose(const Pose& a, const Pose& b, double s) {
  if (s <= 0.0) return a;
  if (s >= 1.0) return b;
  return {slerp(a.rotation, b.rotation, s), (1.0 - s) * a.translation + s * b.translation};
}

Trajectory interpolate_poses(const Pose& a, const Pose& b, int steps) {
  if (steps < 2) throw GeometryError("interpolate_poses needs at least 2 steps");
  Trajectory traj;
  traj.waypoints.reserve(static_cast<std::size_t>(steps));
  const Rotation rel = a.rotation.inverse() * b.rotation;
  Eigen::AngleAxisd aa(rel.matrix());
  for (int i = 0; i < steps; ++i) {
    if (i == 0) {
      traj.waypoints.push_back(a);
    } else if (i == steps - 1) {
      traj.waypoints.push_back(b);
    } else {
      const double s = static_cast<double>(i) / (steps - 1);
      traj.waypoints.push_back({a.rotation * Rotation::exp(aa.axis() * (aa.angle() * s)),
                                (1.0 - s) * a.translation + s * b.translation});
    }
  }
  return traj;
}

double rotation_angle(const Rotation& r) {
  const double c = (r.matrix().trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

PoseError pose_errors(const Pose& current, const Pose& target) {
  const Mat3 rel = current.rotation.matrix().transpose() * target.rotation.matrix();
  const double c = (rel.trace() - 1.0) / 2.0;
  return {std::acos(std::clamp(c, -1.0, 1.0)), (current.translation - target.translation).norm()};
}

}  // namespace nmf
