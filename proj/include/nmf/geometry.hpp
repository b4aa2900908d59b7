#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Proper rotation matrix. Construction through from_matrix() validates
/// orthonormality and det = +1 to 1e-6.
class Rotation {
 public:
  Rotation() : mat_(Mat3::Identity()) {}

  static Rotation from_matrix(const Mat3& m);
  static Rotation about_axis(const Vec3& axis, double angle);
  static Rotation rz(double angle) { return about_axis(Vec3::UnitZ(), angle); }
  /// Rodrigues exponential of a rotation vector (axis * angle).
  static Rotation exp(const Vec3& rotation_vector);

  const Mat3& matrix() const { return mat_; }
  Vec3 column(int i) const { return mat_.col(i); }

  /// Composition; re-orthogonalizes when drift exceeds 1e-9.
  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return mat_ * v; }
  Rotation inverse() const { return Rotation(mat_.transpose(), Unchecked{}); }

  /// Largest |RᵀR - I| entry.
  double orthonormality_drift() const;

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : mat_(m) {}
  friend Rotation reorthogonalize(const Mat3& m);

  Mat3 mat_;
};

/// Nearest-rotation projection of an almost orthonormal matrix (Gram-Schmidt on columns).
Rotation reorthogonalize(const Mat3& m);

struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
};

/// First two columns of a rotation matrix, before orthogonalization.
struct Rot6D {
  Vec3 a1;
  Vec3 a2;
};

struct Sphere {
  Vec3 center;
  double radius = 0.0;
};

/// Keypoints M (gripper frame, meters) and the sphere-swept collision skeleton.
struct GripperModel {
  std::vector<Vec3> keypoints;
  std::vector<Sphere> collision_spheres;

  /// Parallel-jaw gripper: palm, finger bases (±0.04, 0, 0.066), fingertips (±0.04, 0, 0.112).
  static GripperModel parallel_jaw();
  void validate() const;
  /// Stable 64-bit FNV-1a hash over the geometry, used for dataset provenance.
  std::uint64_t hash() const;
};

/// Waypoints g_0 (grasp) ... g_t (start).
struct Trajectory {
  std::vector<Pose> waypoints;
};

struct PoseError {
  double rotation = 0.0;     // radians
  double translation = 0.0;  // meters
};

Pose compose_poses(const Pose& a, const Pose& b);
Pose invert_pose(const Pose& p);

Rotation rot6d_to_rotation(const Rot6D& r);
Vec9 pose_to_vec9(const Pose& p);
/// Inverse of pose_to_vec9 (decodes the rotation through Gram-Schmidt).
Pose vec9_to_pose(const Vec9& v);

std::vector<Vec3> transform_keypoints(const Pose& p, const GripperModel& gm);
double pose_pair_distance(const Pose& a, const Pose& b, const GripperModel& gm);
/// Same metric on pre-transformed keypoint images of equal length.
double keypoint_image_distance(std::span<const Vec3> a, std::span<const Vec3> b);
double trajectory_path_length(const Trajectory& traj, const GripperModel& gm);

/// Geodesic rotation interpolation; s in [0, 1].
Rotation slerp(const Rotation& a, const Rotation& b, double s);
Pose interpolate_pose(const Pose& a, const Pose& b, double s);
Trajectory interpolate_poses(const Pose& a, const Pose& b, int steps);

PoseError pose_errors(const Pose& current, const Pose& target);

/// Geodesic angle of a rotation, in [0, π].
double rotation_angle(const Rotation& r);

}  // namespace nmf
