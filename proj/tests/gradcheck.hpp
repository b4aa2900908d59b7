#pragma once

#include "nmf/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace nmf::testing {

/// Downsized branch: 8-point cloud, encoder 3 -> 8 -> 16, head 25 -> 8 -> 1.
inline NetworkShape tiny_shape() {
  NetworkShape s;
  s.encoder_widths = {3, 8, 16};
  s.head_hidden = {8};
  return s;
}

inline MatrixX<double> tiny_cloud(Rng& rng, int points = 8) {
  MatrixX<double> c(3, points);
  for (int i = 0; i < points; ++i)
    for (int k = 0; k < 3; ++k) c(k, i) = uniform(rng, -0.1, 0.1);
  return c;
}

inline BranchBatch<double> tiny_batch(Rng& rng, BranchKind kind, std::size_t n, std::uint16_t objects = 1) {
  BranchBatch<double> b;
  b.poses.resize(kPoseDim, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const Pose p{random_rotation(rng), Vec3(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3))};
    b.poses.col(static_cast<Eigen::Index>(j)) = pose_to_vec9(p);
    b.targets.push_back(kind == BranchKind::path ? uniform(rng, 0.0, 1.0) : (uniform(rng, 0.0, 1.0) < 0.5 ? 0.0 : 1.0));
    b.object_index.push_back(static_cast<std::uint16_t>(j % objects));
  }
  return b;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
  std::size_t kinked = 0;  // parameters whose +-h interval straddles a ReLU, max-pool or l1 kink
};

/// Central finite differences against the analytic gradient of every parameter.
/// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps parameters
/// with a vanishing gradient (dead units) from dividing round-off by zero.
/// A parameter whose one-sided slopes disagree by more than 0.1% has a kink
/// within h; central differences are no reference there, so it is counted in
/// `kinked` and left out of the error. The test never looks at the analytic
/// gradient to decide this. `distort` lets tests corrupt the analytic gradient.
inline GradCheck check_gradients(Branch<double> branch, std::span<const MatrixX<double>> clouds,
                                 const BranchBatch<double>& batch, double h = 1e-4, double floor = 1e-6,
                                 const std::function<void(Branch<double>&)>& distort = {}) {
  Branch<double> analytic = compute_gradients(branch, clouds, batch, Execution::serial).grads;
  if (distort) distort(analytic);
  GradCheck out;
  std::vector<double*> params;
  std::vector<const double*> grads;
  Branch<double> g = analytic;
  for_each_tensor(
      [&](auto&& p, auto&& a) {
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          params.push_back(&p.data()[i]);
          grads.push_back(&a.data()[i]);
        }
      },
      branch, g);
  const double centre = batch_loss(branch, clouds, batch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = batch_loss(branch, clouds, batch);
    *params[i] = saved - h;
    const double down = batch_loss(branch, clouds, batch);
    *params[i] = saved;
    const double right = (up - centre) / h;
    const double left = (centre - down) / h;
    if (std::abs(right - left) > 1e-3 * std::max({std::abs(right), std::abs(left), floor})) {
      ++out.kinked;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = *grads[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    out.max_rel_error = std::max(out.max_rel_error, rel);
  }
  out.parameters = params.size();
  return out;
}

}  // namespace nmf::testing
