#pragma once

#include "nmf/dataset.hpp"
#include "nmf/network.hpp"
#include "nmf/parallel.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace nmf {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 2e-3;
  double weight_decay = 1e-6;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 0;
  std::uint64_t seed = 0;
  bool train_path = true;
  bool train_collision = true;

  void validate() const;
};

enum class BranchKind { path, collision };

/// Inputs of one branch batch. Samples are grouped per object; every object
/// index refers into the cloud list.
template <typename Scalar>
struct BranchBatch {
  MatrixX<Scalar> poses;                    // 9 x B
  std::vector<double> targets;              // path length (m) or collision label {0, 1}
  std::vector<std::uint16_t> object_index;  // B entries

  std::size_t size() const { return targets.size(); }
};

template <typename Scalar>
struct GradientResult {
  Branch<Scalar> grads;
  double mean_loss = 0.0;
};

/// Exact reverse-mode gradients of the mean batch loss (l1 for the path
/// branch, binary cross-entropy for the collision branch) with respect to
/// every parameter of the branch.
///
/// The parallel kernel shards the head over fixed groups of samples and the
/// encoder over fixed point chunks, so its result does not depend on the
/// worker count. The serial kernel runs the head as one whole-batch product
/// and is kept as the reference; the two agree to float rounding.
template <typename Scalar>
GradientResult<Scalar> compute_gradients(const Branch<Scalar>& branch,
                                         std::span<const MatrixX<Scalar>> clouds,
                                         const BranchBatch<Scalar>& batch,
                                         Execution exec = Execution::parallel,
                                         std::size_t batch_id = 0);

/// Mean loss only (used by the finite-difference oracle and evaluation).
template <typename Scalar>
double batch_loss(const Branch<Scalar>& branch, std::span<const MatrixX<Scalar>> clouds,
                  const BranchBatch<Scalar>& batch);

template <typename Scalar>
BranchBatch<Scalar> make_batch(std::span<const TrajectoryRecord> records, std::span<const std::size_t> indices,
                               BranchKind kind);

template <typename Scalar>
struct AdamState {
  Branch<Scalar> m;
  Branch<Scalar> v;
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(const Branch<Scalar>& params) {
  return {zeros_like(params), zeros_like(params)};
}

/// Adam with bias correction; weight decay is coupled L2 (grad += wd * param
/// before the moment updates). step is 1-based.
template <typename Scalar>
void adam_step(Branch<Scalar>& params, const Branch<Scalar>& grads, AdamState<Scalar>& state,
               const TrainConfig& cfg, int step);

struct EpochLoss {
  int epoch = 0;
  double path_loss = 0.0;       // mean l1 over path records seen during the epoch
  double collision_loss = 0.0;  // mean BCE over collision records seen during the epoch
};

struct TrainResult {
  std::vector<EpochLoss> curve;
};

/// Per-object clouds indexed by the record object_index.
TrainResult train(ValueModel& model, const Dataset& ds, std::span<const PointCloud> clouds,
                  const TrainConfig& cfg, Execution exec = Execution::parallel);

struct ModelScores {
  double path_mae = 0.0;            // over records with a path label
  double collision_accuracy = 0.0;  // at threshold 0.5, over the scored records
  std::size_t path_records = 0;
  std::size_t collision_records = 0;
};

/// Scores a model on a dataset; when random_poses_only is set the collision
/// accuracy is computed over the uniformly sampled supervision poses only.
ModelScores score_model(const ValueModel& model, const Dataset& ds, std::span<const PointCloud> clouds,
                        bool random_poses_only = true);

extern template GradientResult<float> compute_gradients(const Branch<float>&, std::span<const MatrixX<float>>,
                                                        const BranchBatch<float>&, Execution, std::size_t);
extern template GradientResult<double> compute_gradients(const Branch<double>&, std::span<const MatrixX<double>>,
                                                         const BranchBatch<double>&, Execution, std::size_t);

}  // namespace nmf
