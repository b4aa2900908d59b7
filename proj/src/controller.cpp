#include "nmf/controller.hpp"

#include "nmf/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nmf {

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("mpc horizon must be >= 1");
  if (samples < 2) throw std::invalid_argument("mpc samples must be >= 2");
  if (!(dt > 0.0)) throw std::invalid_argument("mpc dt must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("mpc temperature must be positive");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("mpc tau must lie in (0, 1)");
  if (!((noise_sigma.array() >= 0.0).all())) throw std::invalid_argument("mpc noise sigma must be >= 0");
  if (!(max_linear_speed > 0.0 && max_angular_speed > 0.0 && max_linear_accel > 0.0 && max_angular_accel > 0.0))
    throw std::invalid_argument("mpc limits must be positive");
}

double grasp_cost(double path_length, double collision_prob, double tau) {
  return path_length + (collision_prob >= tau ? 1.0 : 0.0);
}

double grasp_cost(const GraspCostModel& model, const Pose& object_frame_pose, double tau) {
  double pl = 0.0;
  double pc = 0.0;
  model.evaluate(std::span(&object_frame_pose, 1), std::span(&pl, 1), std::span(&pc, 1));
  return grasp_cost(pl, pc, tau);
}

double auxiliary_cost(const GripperState& state, const Vec6& control, const MpcConfig& cfg) {
  const double outside = cfg.bounds.outside_distance(state.pose.translation);
  return cfg.smooth_weight * state.twist.squaredNorm() + cfg.accel_weight * control.squaredNorm() +
         cfg.bounds_weight * outside * outside;
}

Vec6 clamp_control(const Vec6& accel, const MpcConfig& cfg) {
  Vec6 out;
  for (int i = 0; i < 6; ++i) {
    const double lim = i < 3 ? cfg.max_linear_accel : cfg.max_angular_accel;
    out[i] = std::clamp(accel[i], -lim, lim);
  }
  return out;
}

Vec6 clamp_twist(const Vec6& twist, const MpcConfig& cfg) {
  Vec6 out = twist;
  const double v = twist.head<3>().norm();
  if (v > cfg.max_linear_speed) out.head<3>() *= cfg.max_linear_speed / v;
  const double w = twist.tail<3>().norm();
  if (w > cfg.max_angular_speed) out.tail<3>() *= cfg.max_angular_speed / w;
  return out;
}

GripperState step_dynamics(const GripperState& state, const Vec6& accel, double dt, const MpcConfig& cfg) {
  GripperState next;
  next.twist = clamp_twist(state.twist + accel * dt, cfg);
  next.pose.translation = state.pose.translation + next.twist.head<3>() * dt;
  next.pose.rotation = state.pose.rotation * Rotation::exp(next.twist.tail<3>() * dt);
  return next;
}

std::vector<double> mppi_weights(std::span<const double> costs, double temperature) {
  const double min_cost = *std::min_element(costs.begin(), costs.end());
  std::vector<double> w(costs.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    w[k] = std::exp(-(costs[k] - min_cost) / temperature);
    sum += w[k];
  }
  for (double& x : w) x /= sum;
  return w;
}

MppiResult mppi_update(const GripperState& state, const ControlSequence& nominal, const GraspCostModel& model,
                       const Pose& object_pose, const MpcConfig& cfg, std::uint64_t seed, Execution exec) {
  cfg.validate();
  const auto K = static_cast<std::size_t>(cfg.samples);
  const auto H = static_cast<std::size_t>(cfg.horizon);

  std::vector<Vec6> base(H, Vec6::Zero());
  for (std::size_t h = 0; h < std::min(H, nominal.size()); ++h) base[h] = nominal[h];

  // All noise is drawn up front in (k, h, dim) order.
  Rng rng = make_stream(seed, {0x3991});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec6> controls(K * H);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t h = 0; h < H; ++h) {
      Vec6 eps;
      for (int d = 0; d < 6; ++d) eps[d] = normal(rng) * cfg.noise_sigma[d];
      controls[k * H + h] = clamp_control(base[h] + eps, cfg);
    }

  const Pose world_to_object = invert_pose(object_pose);
  std::vector<Pose> poses(K * H);
  std::vector<double> aux(K, 0.0);
  auto rollout = [&](std::size_t k) {
    GripperState s = state;
    for (std::size_t h = 0; h < H; ++h) {
      s = step_dynamics(s, controls[k * H + h], cfg.dt, cfg);
      poses[k * H + h] = compose_poses(world_to_object, s.pose);
      aux[k] += auxiliary_cost(s, controls[k * H + h], cfg);
    }
  };
  const auto nk = static_cast<std::int64_t>(K);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < nk; ++k) rollout(static_cast<std::size_t>(k));
  } else {
    for (std::int64_t k = 0; k < nk; ++k) rollout(static_cast<std::size_t>(k));
  }

  std::vector<double> path_length(K * H);
  std::vector<double> collision(K * H);
  model.evaluate(poses, path_length, collision);

  MppiResult result;
  auto& tel = result.telemetry;
  tel.rollout_costs.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double c = aux[k];
    for (std::size_t h = 0; h < H; ++h) c += grasp_cost(path_length[k * H + h], collision[k * H + h], cfg.tau);
    tel.rollout_costs[k] = c;
  }
  tel.weights = mppi_weights(tel.rollout_costs, cfg.temperature);
  tel.min_cost = *std::min_element(tel.rollout_costs.begin(), tel.rollout_costs.end());
  double sum = 0.0;
  double sq = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    sum += tel.rollout_costs[k];
    sq += tel.weights[k] * tel.weights[k];
  }
  tel.mean_cost = sum / static_cast<double>(K);
  tel.effective_samples = 1.0 / sq;

  result.optimized.assign(H, Vec6::Zero());
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t h = 0; h < H; ++h) result.optimized[h] += tel.weights[k] * controls[k * H + h];
  result.control = result.optimized.front();
  result.nominal.assign(result.optimized.begin() + 1, result.optimized.end());
  result.nominal.push_back(Vec6::Zero());
  return result;
}

RolloutLog run_episode(const GripperState& initial, const ScenePose& scene, const ObjectShape& shape,
                       const GraspCostModel& model, const AnchorGraspSet& anchors, const GripperModel& gm,
                       const MpcConfig& cfg, int steps, std::uint64_t seed, Execution exec) {
  if (steps < 1) throw std::invalid_argument("run_episode needs steps >= 1");
  scene.validate();
  RolloutLog log;
  log.entries.reserve(static_cast<std::size_t>(steps));
  GripperState state = initial;
  Pose object = scene.object_pose;
  ControlSequence nominal(static_cast<std::size_t>(cfg.horizon), Vec6::Zero());

  for (int step = 0; step < steps; ++step) {
    // Zero velocity leaves the pose bit-identical, so static episodes take the same path.
    object = advance_object_pose(object, scene.velocity, cfg.dt);
    const std::uint64_t step_seed = make_stream(seed, {static_cast<std::uint64_t>(step)})();
    const MppiResult r = mppi_update(state, nominal, model, object, cfg, step_seed, exec);
    nominal = r.nominal;
    state = step_dynamics(state, r.control, cfg.dt, cfg);

    if (!state.pose.translation.allFinite() || !state.twist.allFinite() || !state.pose.rotation.matrix().allFinite()) {
      log.aborted = true;
      log.diagnostic = "non-finite gripper state at step " + std::to_string(step);
      break;
    }
    const Pose rel = compose_poses(invert_pose(object), state.pose);
    const PoseError err = pose_errors(rel, anchors.grasps[closest_anchor_index(rel, anchors, gm)]);
    RolloutEntry e;
    e.step = step;
    e.pose = pose_to_vec9(rel);
    e.grasp_cost = grasp_cost(model, rel, cfg.tau);
    e.collision = gripper_in_collision(shape, rel, gm);
    e.rotation_error = err.rotation;
    e.translation_error = err.translation;
    log.entries.push_back(e);
  }
  return log;
}

void write_rollout_log(const std::filesystem::path& path, const RolloutLog& log) {
  std::ostringstream out;
  out << "step";
  for (int i = 0; i < 9; ++i) out << ",pose" << i;
  out << ",grasp_cost,collision,rotation_error_rad,translation_error_m\n";
  for (const auto& e : log.entries) {
    out << e.step;
    for (int i = 0; i < 9; ++i) out << ',' << format_double(e.pose[i]);
    out << ',' << format_double(e.grasp_cost) << ',' << (e.collision ? 1 : 0) << ',' << format_double(e.rotation_error)
        << ',' << format_double(e.translation_error) << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace nmf
