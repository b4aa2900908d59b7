#include "nmf/evaluation.hpp"

#include "nmf/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace nmf {

void EpisodeConfig::validate() const {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  if (steps < 1) throw std::invalid_argument("episode steps must be >= 1");
  if (!(success_translation > 0.0 && success_rotation > 0.0))
    throw std::invalid_argument("success thresholds must be positive");
  if (!(start_distance > 0.0)) throw std::invalid_argument("start distance must be positive");
  if (!(max_object_speed >= 0.0 && max_object_yaw_rate >= 0.0 && max_object_yaw_rate <= 2 * std::numbers::pi))
    throw std::invalid_argument("object velocity limits out of range");
  if (!(placement_range >= 0.0)) throw std::invalid_argument("placement range must be >= 0");
  if (approach_window < 1) throw std::invalid_argument("approach window must be >= 1");
}

std::string to_string(EpisodeMode mode) { return mode == EpisodeMode::static_object ? "static" : "dynamic"; }

EpisodeMode episode_mode_from_string(const std::string& s) {
  if (s == "static") return EpisodeMode::static_object;
  if (s == "dynamic") return EpisodeMode::dynamic_object;
  throw std::invalid_argument("unknown episode mode '" + s + "'");
}

Pose closest_anchor_grasp(const Pose& g, const AnchorGraspSet& anchors, const GripperModel& gm) {
  return anchors.grasps[closest_anchor_index(g, anchors, gm)];
}

Pose stable_object_pose(const ObjectShape& shape, double placement_range, Rng& rng) {
  using std::numbers::pi;
  Rotation rest;
  double lift = 0.0;
  if (shape.is_box()) {
    const Vec3& e = std::get<BoxShape>(shape.geometry).extents;
    std::uniform_int_distribution<int> face(0, 5);
    switch (face(rng)) {
      case 0: lift = e.z() / 2; break;
      case 1: rest = Rotation::about_axis(Vec3::UnitX(), pi); lift = e.z() / 2; break;
      case 2: rest = Rotation::about_axis(Vec3::UnitX(), pi / 2); lift = e.y() / 2; break;
      case 3: rest = Rotation::about_axis(Vec3::UnitX(), -pi / 2); lift = e.y() / 2; break;
      case 4: rest = Rotation::about_axis(Vec3::UnitY(), pi / 2); lift = e.x() / 2; break;
      default: rest = Rotation::about_axis(Vec3::UnitY(), -pi / 2); lift = e.x() / 2; break;
    }
  } else {
    const auto& b = std::get<BowlShape>(shape.geometry);
    std::bernoulli_distribution inverted(0.5);
    if (inverted(rng)) {
      rest = Rotation::about_axis(Vec3::UnitX(), pi);
      lift = b.rim_z();  // rim plane lands on the table
    } else {
      lift = b.outer_radius;
    }
  }
  Pose p;
  p.rotation = Rotation::rz(uniform(rng, -pi, pi)) * rest;
  p.translation = Vec3(uniform(rng, -placement_range, placement_range),
                       uniform(rng, -placement_range, placement_range), lift);
  return p;
}

EpisodeSetup sample_episode(const ObjectShape& shape, const GripperModel& gm, const EpisodeConfig& cfg,
                            std::size_t index) {
  Rng rng = make_stream(cfg.seed, {0xe915, index});
  EpisodeSetup setup;
  setup.scene.object_pose = stable_object_pose(shape, cfg.placement_range, rng);
  if (cfg.mode == EpisodeMode::dynamic_object) {
    // Own stream, so static and dynamic episodes share their initial poses.
    Rng vel = make_stream(cfg.seed, {0xe915, index, 2});
    const double heading = uniform(vel, -std::numbers::pi, std::numbers::pi);
    const double speed = uniform(vel, 0.0, cfg.max_object_speed);
    const double yaw_rate = uniform(vel, 0.0, cfg.max_object_yaw_rate);
    setup.scene.velocity << speed * std::cos(heading), speed * std::sin(heading), 0.0, 0.0, 0.0, yaw_rate;
  }
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw std::runtime_error("cannot place a collision-free initial gripper pose");
    Pose rel;
    rel.rotation = random_rotation(rng);
    rel.translation = cfg.start_distance * random_unit_vector(rng);
    if (gripper_in_collision(shape, rel, gm)) continue;
    setup.initial.pose = compose_poses(setup.scene.object_pose, rel);
    break;
  }
  return setup;
}

RolloutCurves run_rollout_suite(const EpisodeConfig& cfg, const GraspCostModel& model, const ObjectShape& shape,
                                const AnchorGraspSet& anchors, const GripperModel& gm, const MpcConfig& mpc,
                                Execution exec) {
  cfg.validate();
  mpc.validate();
  const auto n = static_cast<std::int64_t>(cfg.episodes);
  RolloutCurves curves;
  curves.episodes.resize(static_cast<std::size_t>(cfg.episodes));
  auto run = [&](std::int64_t i) {
    const auto idx = static_cast<std::size_t>(i);
    const EpisodeSetup s = sample_episode(shape, gm, cfg, idx);
    const std::uint64_t episode_seed = make_stream(cfg.seed, {0xe915, idx, 1})();
    curves.episodes[idx] =
        run_episode(s.initial, s.scene, shape, model, anchors, gm, mpc, cfg.steps, episode_seed, Execution::serial);
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) run(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) run(i);
  }

  const auto steps = static_cast<std::size_t>(cfg.steps);
  std::vector<const RolloutLog*> complete;
  for (const auto& log : curves.episodes) {
    if (log.aborted || log.entries.size() != steps)
      ++curves.failures;
    else
      complete.push_back(&log);
  }
  curves.rotation_mean.assign(steps, 0.0);
  curves.rotation_std.assign(steps, 0.0);
  curves.translation_mean.assign(steps, 0.0);
  curves.translation_std.assign(steps, 0.0);
  if (complete.empty()) return curves;
  const double m = static_cast<double>(complete.size());
  for (std::size_t t = 0; t < steps; ++t) {
    double rs = 0.0, ts = 0.0;
    for (const auto* log : complete) {
      rs += log->entries[t].rotation_error;
      ts += log->entries[t].translation_error;
    }
    const double rm = rs / m, tm = ts / m;
    double rv = 0.0, tv = 0.0;
    for (const auto* log : complete) {
      rv += std::pow(log->entries[t].rotation_error - rm, 2);
      tv += std::pow(log->entries[t].translation_error - tm, 2);
    }
    curves.rotation_mean[t] = rm;
    curves.translation_mean[t] = tm;
    curves.rotation_std[t] = std::sqrt(rv / m);
    curves.translation_std[t] = std::sqrt(tv / m);
  }
  return curves;
}

void write_curves(const std::filesystem::path& path, const RolloutCurves& curves) {
  std::ostringstream out;
  out << "step,rotation_mean_rad,rotation_std_rad,translation_mean_m,translation_std_m\n";
  for (std::size_t t = 0; t < curves.steps(); ++t)
    out << t << ',' << format_double(curves.rotation_mean[t]) << ',' << format_double(curves.rotation_std[t]) << ','
        << format_double(curves.translation_mean[t]) << ',' << format_double(curves.translation_std[t]) << '\n';
  write_text_file(path, out.str());
}

RolloutCurves read_curves(const std::filesystem::path& path) {
  const TextTable table = read_text_table(path);
  if (table.header.size() != 5) throw std::runtime_error("curve file " + path.string() + " has an unexpected header");
  RolloutCurves c;
  for (const auto& row : table.rows) {
    if (row.size() != 5) throw std::runtime_error("curve file " + path.string() + " has a short row");
    c.rotation_mean.push_back(row[1]);
    c.rotation_std.push_back(row[2]);
    c.translation_mean.push_back(row[3]);
    c.translation_std.push_back(row[4]);
  }
  return c;
}

void write_episode_traces(const std::filesystem::path& path, const RolloutCurves& curves) {
  std::ostringstream out;
  out << "episode,step,rotation_error_rad,translation_error_m\n";
  for (std::size_t e = 0; e < curves.episodes.size(); ++e)
    for (const auto& entry : curves.episodes[e].entries)
      out << e << ',' << entry.step << ',' << format_double(entry.rotation_error) << ','
          << format_double(entry.translation_error) << '\n';
  write_text_file(path, out.str());
}

SuccessReport grasp_success_eval(const GraspCostModel& model, const ObjectShape& shape, const AnchorGraspSet& anchors,
                                 const GripperModel& gm, const MpcConfig& mpc, const EpisodeConfig& cfg,
                                 std::size_t cases, Execution exec) {
  EpisodeConfig c = cfg;
  c.mode = EpisodeMode::static_object;
  c.episodes = static_cast<int>(cases);
  const RolloutCurves runs = run_rollout_suite(c, model, shape, anchors, gm, mpc, exec);

  SuccessReport report;
  report.cases = cases;
  for (const auto& log : runs.episodes) {
    bool ok = !log.aborted && !log.entries.empty();
    if (ok) {
      const std::size_t window = std::min<std::size_t>(static_cast<std::size_t>(c.approach_window), log.entries.size());
      for (std::size_t i = log.entries.size() - window; i < log.entries.size(); ++i)
        if (log.entries[i].collision) ok = false;
    }
    if (ok) {
      const Pose final_pose = vec9_to_pose(log.entries.back().pose);
      ok = std::any_of(anchors.grasps.begin(), anchors.grasps.end(), [&](const Pose& a) {
        const PoseError e = pose_errors(final_pose, a);
        return e.translation < c.success_translation && e.rotation < c.success_rotation;
      });
    }
    report.outcome.push_back(ok);
    if (ok) ++report.successes;
  }
  return report;
}

std::vector<double> grid_axis(double center, double half_range, double resolution) {
  if (!(resolution > 0.0) || !(half_range >= 0.0)) throw std::invalid_argument("invalid cost-map grid");
  const auto half = static_cast<long>(std::floor(half_range / resolution + 1e-9));
  std::vector<double> axis;
  for (long i = -half; i <= half; ++i) axis.push_back(center + static_cast<double>(i) * resolution);
  return axis;
}

CostMapGrid export_cost_map(const ValueModel& model, const PointCloud& cloud, const Pose& base, double half_range_x,
                            double half_range_y, double resolution, Execution exec) {
  CostMapGrid grid;
  grid.base = base;
  grid.xs = grid_axis(base.translation.x(), half_range_x, resolution);
  grid.ys = grid_axis(base.translation.y(), half_range_y, resolution);
  std::vector<Pose> poses;
  poses.reserve(grid.xs.size() * grid.ys.size());
  for (double y : grid.ys)
    for (double x : grid.xs) {
      Pose p = base;
      p.translation.x() = x;
      p.translation.y() = y;
      poses.push_back(p);
    }
  const LearnedCost cost(model, cloud, exec);
  grid.values.resize(poses.size());
  std::vector<double> collision(poses.size());
  cost.evaluate(poses, grid.values, collision);
  return grid;
}

void write_cost_map(const std::filesystem::path& path, const CostMapGrid& grid) {
  std::ostringstream out;
  out << "x_m,y_m,path_length_m\n";
  for (std::size_t iy = 0; iy < grid.ys.size(); ++iy)
    for (std::size_t ix = 0; ix < grid.xs.size(); ++ix)
      out << format_double(grid.xs[ix]) << ',' << format_double(grid.ys[iy]) << ',' << format_double(grid.at(ix, iy))
          << '\n';
  write_text_file(path, out.str());
}

CostMapGrid read_cost_map(const std::filesystem::path& path) {
  const TextTable table = read_text_table(path);
  if (table.header.size() != 3 || table.rows.empty())
    throw std::runtime_error("cost map " + path.string() + " is malformed");
  CostMapGrid grid;
  for (const auto& row : table.rows) {
    if (row.size() != 3) throw std::runtime_error("cost map " + path.string() + " has a short row");
    if (row[1] == table.rows.front()[1]) grid.xs.push_back(row[0]);
    if (grid.ys.empty() || grid.ys.back() != row[1]) grid.ys.push_back(row[1]);
    grid.values.push_back(row[2]);
  }
  if (grid.xs.size() * grid.ys.size() != grid.values.size())
    throw std::runtime_error("cost map " + path.string() + " is not a full grid");
  return grid;
}

std::size_t top_down_anchor_index(const AnchorGraspSet& anchors) {
  if (anchors.size() == 0) throw std::invalid_argument("empty anchor set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < anchors.size(); ++i)
    if (anchors.grasps[i].rotation.column(2).z() < anchors.grasps[best].rotation.column(2).z()) best = i;
  return best;
}

}  // namespace nmf
