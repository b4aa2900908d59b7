#include "nmf/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace nmf {

ObjectShape ObjectShape::box(std::string id, const Vec3& extents) {
  ObjectShape s{std::move(id), BoxShape{extents}};
  s.validate();
  return s;
}

ObjectShape ObjectShape::bowl(std::string id, double outer_radius, double inner_radius,
                              double height) {
  ObjectShape s{std::move(id), BowlShape{outer_radius, inner_radius, height}};
  s.validate();
  return s;
}

void ObjectShape::validate() const {
  if (object_id.empty()) throw GeometryError("object_id must not be empty");
  if (const auto* box = std::get_if<BoxShape>(&geometry)) {
    if (!(box->extents.minCoeff() > 0.0) || !box->extents.allFinite())
      throw GeometryError("box '" + object_id + "' extents must be positive");
    return;
  }
  const auto& bowl = std::get<BowlShape>(geometry);
  if (!(bowl.inner_radius > 0.0) || !(bowl.outer_radius > bowl.inner_radius))
    throw GeometryError("bowl '" + object_id + "' needs 0 < inner_radius < outer_radius");
  // The rim plane must cut the inner sphere, otherwise the shape is not a bowl.
  if (!(bowl.height > bowl.outer_radius - bowl.inner_radius) ||
      !(bowl.height <= bowl.outer_radius))
    throw GeometryError("bowl '" + object_id +
                        "' height must lie in (outer_radius - inner_radius, outer_radius]");
}

void ScenePose::validate() const {
  if (!velocity.allFinite() || !object_pose.translation.allFinite())
    throw GeometryError("scene pose is not finite");
  if (velocity.tail<3>().norm() > 2.0 * std::numbers::pi)
    throw GeometryError("object angular speed exceeds 2*pi rad/s");
}

double sdf_box(const BoxShape& box, const Vec3& p) {
  const Vec3 d = p.cwiseAbs() - 0.5 * box.extents;
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

namespace {

// Distance in the (rho, z) half-plane to the lower arc {|q| = a, z <= zr}.
double lower_arc_distance(double rho, double z, double a, double zr) {
  const double n = std::hypot(rho, z);
  if (zr >= a) return std::abs(n - a);
  if (n == 0.0) return a;
  if (z * a / n <= zr) return std::abs(n - a);
  const double w = std::sqrt(a * a - zr * zr);
  return std::hypot(rho - w, z - zr);
}

}  // namespace

double sdf_bowl(const BowlShape& bowl, const Vec3& p) {
  const double rho = std::hypot(p.x(), p.y());
  const double z = p.z();
  const double zr = bowl.rim_z();
  const double r_in = bowl.inner_radius;
  const double r_out = bowl.outer_radius;

  const double w_in = std::sqrt(std::max(0.0, r_in * r_in - zr * zr));
  const double w_out = std::sqrt(std::max(0.0, r_out * r_out - zr * zr));
  const double rim_rho = std::clamp(rho, w_in, w_out);
  const double d_rim = std::hypot(rho - rim_rho, z - zr);

  const double d = std::min({lower_arc_distance(rho, z, r_in, zr),
                             lower_arc_distance(rho, z, r_out, zr), d_rim});
  const double n = std::hypot(rho, z);
  const bool inside = n >= r_in && n <= r_out && z <= zr;
  return inside ? -d : d;
}

double sdf_query(const ObjectShape& shape, const Vec3& point) {
  return std::visit(
      [&](const auto& g) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(g)>, BoxShape>)
          return sdf_box(g, point);
        else
          return sdf_bowl(g, point);
      },
      shape.geometry);
}

namespace {

PointCloud sample_box_surface(const BoxShape& box, std::size_t n, Rng& rng) {
  const Vec3 h = 0.5 * box.extents;
  const Vec3& e = box.extents;
  // Faces in order +x, -x, +y, -y, +z, -z.
  const std::array<double, 6> areas{e.y() * e.z(), e.y() * e.z(), e.x() * e.z(),
                                    e.x() * e.z(), e.x() * e.y(), e.x() * e.y()};
  std::discrete_distribution<int> face_dist(areas.begin(), areas.end());
  PointCloud cloud{Eigen::Matrix3Xd(3, static_cast<Eigen::Index>(n))};
  for (std::size_t i = 0; i < n; ++i) {
    const int face = face_dist(rng);
    const int axis = face / 2;
    const double sign = face % 2 == 0 ? 1.0 : -1.0;
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = uniform(rng, -h[k], h[k]);
    p[axis] = sign * h[axis];
    cloud.points.col(static_cast<Eigen::Index>(i)) = p;
  }
  return cloud;
}

PointCloud sample_bowl_surface(const BowlShape& bowl, std::size_t n, Rng& rng) {
  const double zr = bowl.rim_z();
  const double r_in = bowl.inner_radius;
  const double r_out = bowl.outer_radius;
  const double w_in = std::sqrt(r_in * r_in - zr * zr);
  const double w_out = std::sqrt(r_out * r_out - zr * zr);
  // Archimedes: a sphere's area is uniform in z, so a cap below zr has area 2*pi*a*(zr + a).
  const std::array<double, 3> areas{2.0 * std::numbers::pi * r_out * (zr + r_out),
                                    2.0 * std::numbers::pi * r_in * (zr + r_in),
                                    std::numbers::pi * (w_out * w_out - w_in * w_in)};
  std::discrete_distribution<int> part_dist(areas.begin(), areas.end());
  PointCloud cloud{Eigen::Matrix3Xd(3, static_cast<Eigen::Index>(n))};
  for (std::size_t i = 0; i < n; ++i) {
    const int part = part_dist(rng);
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    double rho = 0.0;
    double z = zr;
    if (part < 2) {
      const double a = part == 0 ? r_out : r_in;
      z = uniform(rng, -a, zr);
      rho = std::sqrt(std::max(0.0, a * a - z * z));
    } else {
      // Uniform on the annulus: radius density proportional to rho.
      const double u = uniform(rng, 0.0, 1.0);
      rho = std::sqrt(w_in * w_in + u * (w_out * w_out - w_in * w_in));
    }
    cloud.points.col(static_cast<Eigen::Index>(i)) = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
  }
  return cloud;
}

}  // namespace

PointCloud sample_surface_points(const ObjectShape& shape, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw GeometryError("sample_surface_points needs n >= 1");
  Rng rng = make_stream(seed, {0x5afe});
  if (const auto* box = std::get_if<BoxShape>(&shape.geometry))
    return sample_box_surface(*box, n, rng);
  return sample_bowl_surface(std::get<BowlShape>(shape.geometry), n, rng);
}

std::vector<std::size_t> farthest_point_sample_from(const PointCloud& cloud, std::size_t k,
                                                    std::size_t start) {
  const std::size_t n = cloud.size();
  if (k > n) throw GeometryError("farthest_point_sample: k exceeds the number of points");
  if (k == 0) return {};
  if (start >= n) throw GeometryError("farthest_point_sample: start index out of range");
  std::vector<std::size_t> picks{start};
  picks.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  chosen[start] = 1;
  std::size_t last = start;
  while (picks.size() < k) {
    const Vec3 p = cloud.point(last);
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      min_d2[i] = std::min(min_d2[i], (cloud.point(i) - p).squaredNorm());
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    chosen[best] = 1;
    picks.push_back(best);
    last = best;
  }
  return picks;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::uint64_t seed) {
  if (k > cloud.size()) throw GeometryError("farthest_point_sample: k exceeds the number of points");
  if (k == 0) return {};
  Rng rng = make_stream(seed, {0xf95});
  std::uniform_int_distribution<std::size_t> dist(0, cloud.size() - 1);
  return farthest_point_sample_from(cloud, k, dist(rng));
}

bool gripper_in_collision(const ObjectShape& shape, const Pose& g, const GripperModel& gm) {
  for (const auto& s : gm.collision_spheres)
    if (sdf_query(shape, g.apply(s.center)) < s.radius) return true;
  return false;
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& p) {
  PointCloud out{p.rotation.matrix() * cloud.points};
  out.points.colwise() += p.translation;
  return out;
}

Pose advance_object_pose(const Pose& pose, const Vec6& velocity, double dt) {
  return {Rotation::exp(velocity.tail<3>() * dt) * pose.rotation,
          pose.translation + velocity.head<3>() * dt};
}

}  // namespace nmf
