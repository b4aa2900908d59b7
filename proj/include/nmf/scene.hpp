#pragma once

#include "nmf/geometry.hpp"
#include "nmf/random.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace nmf {

struct BoxShape {
  Vec3 extents;  // full edge lengths, meters
};

/// Spherical shell between inner and outer radius, cut by a flat rim plane.
/// The object frame is centered on the sphere center; the rim plane sits at
/// z = height - outer_radius, so height == outer_radius is a hemisphere.
struct BowlShape {
  double outer_radius = 0.0;
  double inner_radius = 0.0;
  double height = 0.0;

  double rim_z() const { return height - outer_radius; }
};

struct ObjectShape {
  std::string object_id;
  std::variant<BoxShape, BowlShape> geometry;

  static ObjectShape box(std::string id, const Vec3& extents);
  static ObjectShape bowl(std::string id, double outer_radius, double inner_radius, double height);

  bool is_box() const { return std::holds_alternative<BoxShape>(geometry); }
  void validate() const;
};

/// Points stored column-wise (3 x N), object frame, meters.
struct PointCloud {
  Eigen::Matrix3Xd points;

  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
  Vec3 point(std::size_t i) const { return points.col(static_cast<Eigen::Index>(i)); }
};

/// Object pose plus a 6-vector twist (linear m/s, angular rad/s; world frame).
struct ScenePose {
  Pose object_pose;
  Vec6 velocity = Vec6::Zero();

  void validate() const;
};

double sdf_query(const ObjectShape& shape, const Vec3& point);
double sdf_box(const BoxShape& box, const Vec3& point);
double sdf_bowl(const BowlShape& bowl, const Vec3& point);

/// Area-weighted uniform samples on the surface; deterministic given seed.
PointCloud sample_surface_points(const ObjectShape& shape, std::size_t n, std::uint64_t seed);

/// Greedy farthest point sampling from a fixed start index; ties resolve to the lowest index.
std::vector<std::size_t> farthest_point_sample_from(const PointCloud& cloud, std::size_t k,
                                                    std::size_t start);
/// Greedy farthest point sampling with a seeded start index.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::uint64_t seed);

bool gripper_in_collision(const ObjectShape& shape, const Pose& g, const GripperModel& gm);
PointCloud transform_cloud(const PointCloud& cloud, const Pose& p);

/// Advance an object pose by its twist over dt (world-frame angular velocity).
Pose advance_object_pose(const Pose& pose, const Vec6& velocity, double dt);

}  // namespace nmf
