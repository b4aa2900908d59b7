#include "nmf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nmf {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw TrainingError("learning_rate must be positive");
  if (batch_size < 1) throw TrainingError("batch_size must be >= 1");
  if (epochs < 0) throw TrainingError("epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw TrainingError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw TrainingError("adam betas must lie in [0, 1)");
}

namespace {

constexpr Eigen::Index kPointChunk = 128;
constexpr std::size_t kSampleShard = 32;

template <typename S>
struct EncoderTape {
  std::vector<MatrixX<S>> z;  // pre-activations of every layer but the last
  std::vector<MatrixX<S>> a;  // a[0] = points, a[l + 1] = relu(z[l]); inputs of every layer
  VectorX<S> feature;
  std::vector<Eigen::Index> argmax;
};

// The last layer is max-pooled chunk by chunk and never stored. Chunks merge in
// index order with a strict comparison, so the first maximum wins either way.
template <typename S>
EncoderTape<S> encoder_forward(const Mlp<S>& enc, const MatrixX<S>& points, Execution exec) {
  const Eigen::Index n = points.cols();
  const std::size_t last = enc.layers.size() - 1;
  const Eigen::Index out_dim = enc.layers[last].weight.rows();
  EncoderTape<S> t;
  t.a.resize(last + 1);
  t.z.resize(last);
  t.a[0] = points;
  for (std::size_t l = 0; l < last; ++l) {
    t.z[l].resize(enc.layers[l].weight.rows(), n);
    t.a[l + 1].resize(enc.layers[l].weight.rows(), n);
  }
  const Eigen::Index chunks = (n + kPointChunk - 1) / kPointChunk;
  std::vector<VectorX<S>> chunk_max(static_cast<std::size_t>(chunks));
  std::vector<std::vector<Eigen::Index>> chunk_arg(static_cast<std::size_t>(chunks));

  auto run_chunk = [&](Eigen::Index c) {
    const DenormalsAreZero ftz;
    const Eigen::Index c0 = c * kPointChunk;
    const Eigen::Index len = std::min(kPointChunk, n - c0);
    for (std::size_t l = 0; l < last; ++l) {
      auto z = t.z[l].middleCols(c0, len);
      z.noalias() = enc.layers[l].weight * t.a[l].middleCols(c0, len);
      z.colwise() += enc.layers[l].bias;
      t.a[l + 1].middleCols(c0, len) = z.cwiseMax(S(0));
    }
    MatrixX<S> top = enc.layers[last].weight * t.a[last].middleCols(c0, len);
    top.colwise() += enc.layers[last].bias;
    auto& mx = chunk_max[static_cast<std::size_t>(c)];
    auto& arg = chunk_arg[static_cast<std::size_t>(c)];
    mx = top.col(0).cwiseMax(S(0));
    arg.assign(static_cast<std::size_t>(out_dim), c0);
    for (Eigen::Index j = 1; j < len; ++j)
      for (Eigen::Index r = 0; r < out_dim; ++r)
        if (top(r, j) > mx[r]) {
          mx[r] = top(r, j);
          arg[static_cast<std::size_t>(r)] = c0 + j;
        }
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    for (Eigen::Index c = 0; c < chunks; ++c) run_chunk(c);
  }

  t.feature = chunk_max[0];
  t.argmax = chunk_arg[0];
  for (std::size_t c = 1; c < chunk_max.size(); ++c)
    for (Eigen::Index r = 0; r < out_dim; ++r)
      if (chunk_max[c][r] > t.feature[r]) {
        t.feature[r] = chunk_max[c][r];
        t.argmax[static_cast<std::size_t>(r)] = chunk_arg[c][static_cast<std::size_t>(r)];
      }
  return t;
}

// Gradients reach only the points that won at least one max-pool channel.
template <typename S>
void encoder_backward(const Mlp<S>& enc, const EncoderTape<S>& t, const VectorX<S>& dfeature, Mlp<S>& grad) {
  std::vector<Eigen::Index> cols = t.argmax;
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  const auto ncols = static_cast<Eigen::Index>(cols.size());

  const std::size_t layers = enc.layers.size();
  const std::size_t last = layers - 1;
  // The last layer sees one nonzero per output channel, so it is handled row by row.
  const MatrixX<S> a_last = t.a[last](Eigen::all, cols);
  MatrixX<S> da = MatrixX<S>::Zero(enc.layers[last].weight.cols(), ncols);
  auto& g_last = grad.layers[last];
  for (std::size_t c = 0; c < t.argmax.size(); ++c) {
    const auto r = static_cast<Eigen::Index>(c);
    const Eigen::Index col = t.argmax[c];
    // A positive pooled value means the winning pre-activation was positive.
    if (!(t.feature[r] > S(0))) continue;
    const S d = dfeature[r];
    const auto pos = std::lower_bound(cols.begin(), cols.end(), col) - cols.begin();
    g_last.weight.row(r) += d * a_last.col(pos).transpose();
    g_last.bias[r] += d;
    if (last > 0) da.col(pos) += d * enc.layers[last].weight.row(r).transpose();
  }
  for (std::size_t li = last; li-- > 0;) {
    const MatrixX<S> z = t.z[li](Eigen::all, cols);
    MatrixX<S> dz = (z.array() > S(0)).select(da, S(0));
    const MatrixX<S> a_prev = t.a[li](Eigen::all, cols);
    grad.layers[li].weight.noalias() += dz * a_prev.transpose();
    grad.layers[li].bias += dz.rowwise().sum();
    if (li > 0) da.noalias() = enc.layers[li].weight.transpose() * dz;
  }
}

template <typename S>
struct HeadTape {
  std::vector<MatrixX<S>> z;
  std::vector<MatrixX<S>> a;
};

template <typename S>
void head_forward(const Mlp<S>& head, MatrixX<S> input, HeadTape<S>& t) {
  const std::size_t layers = head.layers.size();
  t.z.resize(layers);
  t.a.resize(layers);
  t.a[0] = std::move(input);
  for (std::size_t l = 0; l < layers; ++l) {
    t.z[l].noalias() = head.layers[l].weight * t.a[l];
    t.z[l].colwise() += head.layers[l].bias;
    if (l + 1 < layers) t.a[l + 1] = t.z[l].cwiseMax(S(0));
  }
}

// Accumulates head gradients; returns the column sum of d loss / d z_0, from
// which the feature gradient follows.
template <typename S>
VectorX<S> head_backward(const Mlp<S>& head, const HeadTape<S>& t, MatrixX<S> dz, Mlp<S>& grad) {
  for (std::size_t l = head.layers.size(); l-- > 0;) {
    grad.layers[l].weight.noalias() += dz * t.a[l].transpose();
    grad.layers[l].bias += dz.rowwise().sum();
    if (l == 0) break;
    MatrixX<S> da = head.layers[l].weight.transpose() * dz;
    dz = (t.z[l - 1].array() > S(0)).select(da, S(0));
  }
  return dz.rowwise().sum();
}

// Loss of one sample and d loss / d logit.
double output_loss(HeadOutput out, double z, double target, double& dz) {
  if (out == HeadOutput::softplus) {
    const double pred = softplus(z);
    dz = loss_path_length_grad(pred, target) * sigmoid(z);
    return loss_path_length(pred, target);
  }
  const double p = sigmoid(z);
  // d/dz of the clamped BCE: p - target inside the clamp, zero outside.
  dz = loss_collision_grad(p, target) == 0.0 ? 0.0 : p - target;
  return loss_collision(p, target);
}

template <typename S>
MatrixX<S> head_input(const VectorX<S>& feature, const MatrixX<S>& poses, const std::vector<Eigen::Index>& cols) {
  MatrixX<S> x(feature.size() + kPoseDim, static_cast<Eigen::Index>(cols.size()));
  x.topRows(feature.size()) = feature.replicate(1, x.cols());
  x.bottomRows(kPoseDim) = poses(Eigen::all, cols);
  return x;
}

template <typename S>
std::vector<std::vector<Eigen::Index>> group_by_object(const BranchBatch<S>& batch, std::size_t n_clouds) {
  std::vector<std::vector<Eigen::Index>> groups(n_clouds);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t obj = batch.object_index[i];
    if (obj >= n_clouds) throw TrainingError("record refers to object index " + std::to_string(obj) + " without a cloud");
    groups[obj].push_back(static_cast<Eigen::Index>(i));
  }
  return groups;
}

template <typename S>
Mlp<S> zero_mlp(const Mlp<S>& like) {
  Mlp<S> z;
  for (const auto& l : like.layers)
    z.layers.push_back({MatrixX<S>::Zero(l.weight.rows(), l.weight.cols()), VectorX<S>::Zero(l.bias.size())});
  return z;
}

template <typename S>
struct ShardResult {
  Mlp<S> head_grad;
  VectorX<S> dz0_sum;
  double loss = 0.0;
};

template <typename S>
ShardResult<S> run_shard(const Branch<S>& branch, const VectorX<S>& feature, const BranchBatch<S>& batch,
                         const std::vector<Eigen::Index>& cols, double inv_batch) {
  const DenormalsAreZero ftz;
  ShardResult<S> r;
  r.head_grad = zero_mlp(branch.head);
  HeadTape<S> tape;
  head_forward(branch.head, head_input(feature, batch.poses, cols), tape);
  const MatrixX<S>& logits = tape.z.back();
  MatrixX<S> dz(1, logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double d = 0.0;
    r.loss += output_loss(branch.output, static_cast<double>(logits(0, j)),
                          batch.targets[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])], d);
    dz(0, j) = static_cast<S>(d * inv_batch);
  }
  r.dz0_sum = head_backward(branch.head, tape, std::move(dz), r.head_grad);
  return r;
}

}  // namespace

template <typename Scalar>
GradientResult<Scalar> compute_gradients(const Branch<Scalar>& branch, std::span<const MatrixX<Scalar>> clouds,
                                         const BranchBatch<Scalar>& batch, Execution exec, std::size_t batch_id) {
  if (batch.size() == 0) throw TrainingError("compute_gradients needs a non-empty batch");
  const DenormalsAreZero ftz;
  GradientResult<Scalar> result{zeros_like(branch), 0.0};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const Eigen::Index fd = branch.feature_dim();
  double loss_sum = 0.0;

  const auto groups = group_by_object(batch, clouds.size());
  for (std::size_t obj = 0; obj < groups.size(); ++obj) {
    const auto& members = groups[obj];
    if (members.empty()) continue;
    const EncoderTape<Scalar> enc = encoder_forward(branch.encoder, clouds[obj], exec);

    std::vector<std::vector<Eigen::Index>> shards;
    if (exec == Execution::serial) {
      shards.push_back(members);
    } else {
      for (std::size_t s = 0; s < members.size(); s += kSampleShard)
        shards.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(s),
                            members.begin() + static_cast<std::ptrdiff_t>(std::min(members.size(), s + kSampleShard)));
    }
    std::vector<ShardResult<Scalar>> parts(shards.size());
    const auto n_shards = static_cast<std::int64_t>(shards.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
      for (std::int64_t s = 0; s < n_shards; ++s)
        parts[static_cast<std::size_t>(s)] = run_shard(branch, enc.feature, batch, shards[static_cast<std::size_t>(s)], inv_batch);
    } else {
      for (std::int64_t s = 0; s < n_shards; ++s)
        parts[static_cast<std::size_t>(s)] = run_shard(branch, enc.feature, batch, shards[static_cast<std::size_t>(s)], inv_batch);
    }

    VectorX<Scalar> dz0 = VectorX<Scalar>::Zero(branch.head.layers.front().weight.rows());
    for (const auto& p : parts) {
      for (std::size_t l = 0; l < p.head_grad.layers.size(); ++l) {
        result.grads.head.layers[l].weight += p.head_grad.layers[l].weight;
        result.grads.head.layers[l].bias += p.head_grad.layers[l].bias;
      }
      dz0 += p.dz0_sum;
      loss_sum += p.loss;
    }
    const VectorX<Scalar> dfeature = branch.head.layers.front().weight.leftCols(fd).transpose() * dz0;
    encoder_backward(branch.encoder, enc, dfeature, result.grads.encoder);
  }
  result.mean_loss = loss_sum * inv_batch;
  if (!std::isfinite(result.mean_loss))
    throw TrainingError("numerical blow-up in batch " + std::to_string(batch_id));
  return result;
}

template <typename Scalar>
double batch_loss(const Branch<Scalar>& branch, std::span<const MatrixX<Scalar>> clouds,
                  const BranchBatch<Scalar>& batch) {
  double sum = 0.0;
  const DenormalsAreZero ftz;
  const auto groups = group_by_object(batch, clouds.size());
  for (std::size_t obj = 0; obj < groups.size(); ++obj) {
    if (groups[obj].empty()) continue;
    const VectorX<Scalar> f = encode_cloud(branch.encoder, clouds[obj]);
    HeadTape<Scalar> tape;
    head_forward(branch.head, head_input(f, batch.poses, groups[obj]), tape);
    for (Eigen::Index j = 0; j < tape.z.back().cols(); ++j) {
      double d = 0.0;
      sum += output_loss(branch.output, static_cast<double>(tape.z.back()(0, j)),
                         batch.targets[static_cast<std::size_t>(groups[obj][static_cast<std::size_t>(j)])], d);
    }
  }
  return sum / static_cast<double>(batch.size());
}

template <typename Scalar>
BranchBatch<Scalar> make_batch(std::span<const TrajectoryRecord> records, std::span<const std::size_t> indices,
                               BranchKind kind) {
  BranchBatch<Scalar> b;
  b.poses.resize(kPoseDim, static_cast<Eigen::Index>(indices.size()));
  b.targets.reserve(indices.size());
  b.object_index.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& r = records[indices[j]];
    for (int k = 0; k < kPoseDim; ++k)
      b.poses(k, static_cast<Eigen::Index>(j)) = static_cast<Scalar>(r.pose[static_cast<std::size_t>(k)]);
    b.targets.push_back(kind == BranchKind::path ? static_cast<double>(r.path_length)
                                                 : static_cast<double>(r.collision_label));
    b.object_index.push_back(r.object_index);
  }
  return b;
}

template <typename Scalar>
void adam_step(Branch<Scalar>& params, const Branch<Scalar>& grads, AdamState<Scalar>& state,
               const TrainConfig& cfg, int step) {
  const DenormalsAreZero ftz;
  const double c1 = 1.0 - std::pow(cfg.beta1, step);
  const double c2 = 1.0 - std::pow(cfg.beta2, step);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto wd = static_cast<Scalar>(cfg.weight_decay);
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  const auto inv_c1 = static_cast<Scalar>(1.0 / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  for_each_tensor(
      [&](auto&& p, auto&& g, auto&& m, auto&& v) {
        const auto gd = (g + wd * p).eval();
        m = b1 * m + (Scalar(1) - b1) * gd;
        v = b2 * v + (Scalar(1) - b2) * gd.square();
        p -= lr * (m * inv_c1) / ((v * inv_c2).sqrt() + eps);
      },
      params, grads, state.m, state.v);
}

TrainResult train(ValueModel& model, const Dataset& ds, std::span<const PointCloud> clouds,
                  const TrainConfig& cfg, Execution exec) {
  cfg.validate();
  std::vector<std::size_t> path_idx;
  std::vector<std::size_t> coll_idx;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    if (ds.records[i].has_path_label()) path_idx.push_back(i);
    coll_idx.push_back(i);
  }
  if (cfg.train_path && path_idx.empty()) throw TrainingError("dataset has no path-length records to train on");
  if (cfg.train_collision && coll_idx.empty()) throw TrainingError("dataset has no collision records to train on");

  std::vector<MatrixX<float>> cloud_mats;
  for (const auto& c : clouds) cloud_mats.push_back(cloud_matrix<float>(c));

  TrainResult result;
  AdamState<float> path_state = make_adam_state(model.path);
  AdamState<float> coll_state = make_adam_state(model.collision);
  int path_step = 0;
  int coll_step = 0;
  std::size_t batch_counter = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  auto run_epoch = [&](Branch<float>& branch, AdamState<float>& state, int& step,
                       std::vector<std::size_t>& order, BranchKind kind, int epoch) {
    Rng rng = make_stream(cfg.seed, {static_cast<std::uint64_t>(epoch), kind == BranchKind::path ? 0u : 1u});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const BranchBatch<float> batch = make_batch<float>(ds.records, idx, kind);
      const auto g = compute_gradients(branch, std::span<const MatrixX<float>>(cloud_mats), batch, exec, batch_counter++);
      adam_step(branch, g.grads, state, cfg, ++step);
      loss_sum += g.mean_loss * static_cast<double>(idx.size());
    }
    return loss_sum / static_cast<double>(order.size());
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLoss e{epoch, 0.0, 0.0};
    if (cfg.train_path) e.path_loss = run_epoch(model.path, path_state, path_step, path_idx, BranchKind::path, epoch);
    if (cfg.train_collision)
      e.collision_loss = run_epoch(model.collision, coll_state, coll_step, coll_idx, BranchKind::collision, epoch);
    if (!std::isfinite(e.path_loss) || !std::isfinite(e.collision_loss))
      throw TrainingError("numerical blow-up in epoch " + std::to_string(epoch));
    result.curve.push_back(e);
  }
  return result;
}

ModelScores score_model(const ValueModel& model, const Dataset& ds, std::span<const PointCloud> clouds,
                        bool random_poses_only) {
  ModelScores s;
  std::vector<BranchEvaluator<float>> path_eval;
  std::vector<BranchEvaluator<float>> coll_eval;
  for (const auto& c : clouds) {
    path_eval.emplace_back(model.path, c);
    coll_eval.emplace_back(model.collision, c);
  }
  double abs_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& r : ds.records) {
    MatrixX<float> x(kPoseDim, 1);
    for (int k = 0; k < kPoseDim; ++k) x(k, 0) = r.pose[static_cast<std::size_t>(k)];
    double out = 0.0;
    if (r.has_path_label()) {
      path_eval.at(r.object_index).evaluate(x, std::span(&out, 1));
      abs_sum += std::abs(out - static_cast<double>(r.path_length));
      ++s.path_records;
    }
    if (!random_poses_only || !r.has_path_label()) {
      coll_eval.at(r.object_index).evaluate(x, std::span(&out, 1));
      if ((out >= 0.5) == (r.collision_label == 1)) ++correct;
      ++s.collision_records;
    }
  }
  s.path_mae = s.path_records ? abs_sum / static_cast<double>(s.path_records) : 0.0;
  s.collision_accuracy = s.collision_records ? static_cast<double>(correct) / static_cast<double>(s.collision_records) : 0.0;
  return s;
}

template GradientResult<float> compute_gradients(const Branch<float>&, std::span<const MatrixX<float>>,
                                                 const BranchBatch<float>&, Execution, std::size_t);
template GradientResult<double> compute_gradients(const Branch<double>&, std::span<const MatrixX<double>>,
                                                  const BranchBatch<double>&, Execution, std::size_t);
template double batch_loss(const Branch<float>&, std::span<const MatrixX<float>>, const BranchBatch<float>&);
template double batch_loss(const Branch<double>&, std::span<const MatrixX<double>>, const BranchBatch<double>&);
template BranchBatch<float> make_batch<float>(std::span<const TrajectoryRecord>, std::span<const std::size_t>, BranchKind);
template BranchBatch<double> make_batch<double>(std::span<const TrajectoryRecord>, std::span<const std::size_t>,
                                                BranchKind);
template void adam_step(Branch<float>&, const Branch<float>&, AdamState<float>&, const TrainConfig&, int);
template void adam_step(Branch<double>&, const Branch<double>&, AdamState<double>&, const TrainConfig&, int);

}  // namespace nmf
