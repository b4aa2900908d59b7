#include "nmf/network.hpp"
#include "nmf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nmf {

void NetworkShape::validate() const {
  if (encoder_widths.size() < 2 || encoder_widths.front() != 3)
    throw NetworkError("encoder widths must start at 3 and have at least one layer");
  for (int w : encoder_widths)
    if (w < 1) throw NetworkError("network widths must be positive");
  for (int w : head_hidden)
    if (w < 1) throw NetworkError("network widths must be positive");
}

template <typename Scalar>
std::size_t Branch<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* mlp : {&encoder, &head})
    for (const auto& l : mlp->layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

namespace {

template <typename Scalar>
DenseLayer<Scalar> he_uniform(int in, int out, Rng& rng) {
  DenseLayer<Scalar> layer{MatrixX<Scalar>(out, in), VectorX<Scalar>::Zero(out)};
  const double bound = std::sqrt(6.0 / in);
  // Row-major fill order keeps the draw sequence independent of storage order.
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) layer.weight(r, c) = static_cast<Scalar>(uniform(rng, -bound, bound));
  return layer;
}

}  // namespace

template <typename Scalar>
Branch<Scalar> init_branch(const NetworkShape& shape, HeadOutput output, Rng& rng) {
  shape.validate();
  Branch<Scalar> b;
  b.output = output;
  for (std::size_t i = 0; i + 1 < shape.encoder_widths.size(); ++i)
    b.encoder.layers.push_back(he_uniform<Scalar>(shape.encoder_widths[i], shape.encoder_widths[i + 1], rng));
  int in = shape.encoder_widths.back() + kPoseDim;
  for (int w : shape.head_hidden) {
    b.head.layers.push_back(he_uniform<Scalar>(in, w, rng));
    in = w;
  }
  b.head.layers.push_back(he_uniform<Scalar>(in, 1, rng));
  return b;
}

template <typename Scalar>
ValueModelT<Scalar> init_value_model(const NetworkShape& shape, std::uint64_t seed) {
  Rng path_rng = make_stream(seed, {0x9a7});
  Rng coll_rng = make_stream(seed, {0xc011});
  return {init_branch<Scalar>(shape, HeadOutput::softplus, path_rng),
          init_branch<Scalar>(shape, HeadOutput::sigmoid, coll_rng)};
}

template <typename Scalar>
Branch<Scalar> zeros_like(const Branch<Scalar>& b) {
  Branch<Scalar> z = b;
  for_each_tensor([](auto&& t) { t.setZero(); }, z);
  return z;
}

template <typename Scalar>
ValueModelT<Scalar> zeros_like(const ValueModelT<Scalar>& m) {
  return {zeros_like(m.path), zeros_like(m.collision)};
}

template <typename Scalar>
VectorX<Scalar> encode_cloud(const Mlp<Scalar>& encoder, const MatrixX<Scalar>& points) {
  const DenormalsAreZero ftz;
  if (points.cols() < 1) throw NetworkError("encode_cloud needs at least one point");
  MatrixX<Scalar> a = points;
  for (const auto& layer : encoder.layers) {
    MatrixX<Scalar> z = layer.weight * a;
    z.colwise() += layer.bias;
    a = z.cwiseMax(Scalar(0));
  }
  return a.rowwise().maxCoeff();
}

double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double apply_output(HeadOutput out, double z) {
  if (out == HeadOutput::softplus) return softplus(z);
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(sigmoid(z), lo, hi);
}

template <typename Scalar>
BranchEvaluator<Scalar>::BranchEvaluator(const Branch<Scalar>& branch, const PointCloud& cloud)
    : branch_(&branch), feature_(encode_cloud(branch.encoder, cloud)) {
  const DenormalsAreZero ftz;
  const auto& first = branch.head.layers.front();
  const Eigen::Index fd = feature_.size();
  if (first.weight.cols() != fd + kPoseDim) throw NetworkError("head input width does not match feature + pose");
  pose_weight_ = first.weight.rightCols(kPoseDim);
  folded_bias_ = first.weight.leftCols(fd) * feature_ + first.bias;
}

template <typename Scalar>
void BranchEvaluator<Scalar>::logits(const MatrixX<Scalar>& poses, std::span<double> out) const {
  const DenormalsAreZero ftz;
  MatrixX<Scalar> z = pose_weight_ * poses;
  z.colwise() += folded_bias_;
  const auto& layers = branch_->head.layers;
  for (std::size_t l = 1; l < layers.size(); ++l) {
    MatrixX<Scalar> a = z.cwiseMax(Scalar(0));
    z.noalias() = layers[l].weight * a;
    z.colwise() += layers[l].bias;
  }
  for (Eigen::Index i = 0; i < z.cols(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(z(0, i));
}

template <typename Scalar>
void BranchEvaluator<Scalar>::evaluate(const MatrixX<Scalar>& poses, std::span<double> out) const {
  logits(poses, out);
  for (double& v : out) v = apply_output(branch_->output, v);
}

template <typename Scalar>
double BranchEvaluator<Scalar>::evaluate(const Pose& g) const {
  MatrixX<Scalar> x = pose_to_vec9(g).cast<Scalar>();
  double out = 0.0;
  evaluate(x, std::span(&out, 1));
  return out;
}

template <typename Scalar>
MatrixX<Scalar> poses_matrix(std::span<const Pose> poses) {
  MatrixX<Scalar> m(kPoseDim, static_cast<Eigen::Index>(poses.size()));
  for (std::size_t i = 0; i < poses.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) = pose_to_vec9(poses[i]).cast<Scalar>();
  return m;
}

double predict_path_length(const ValueModel& model, const PointCloud& cloud, const Pose& g) {
  return BranchEvaluator<float>(model.path, cloud).evaluate(g);
}

double predict_collision(const ValueModel& model, const PointCloud& cloud, const Pose& g) {
  return BranchEvaluator<float>(model.collision, cloud).evaluate(g);
}

double loss_path_length(double pred, double gt) { return std::abs(pred - gt); }

double loss_path_length_grad(double pred, double gt) {
  if (pred > gt) return 1.0;
  if (pred < gt) return -1.0;
  return 0.0;
}

namespace {
constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;
}  // namespace

double loss_collision(double pred, double gt) {
  const double p = std::clamp(pred, kProbClampLo, kProbClampHi);
  return -(gt * std::log(p) + (1.0 - gt) * std::log(1.0 - p));
}

double loss_collision_grad(double pred, double gt) {
  if (pred < kProbClampLo || pred > kProbClampHi) return 0.0;
  return -gt / pred + (1.0 - gt) / (1.0 - pred);
}

double mean_loss_path_length(std::span<const double> pred, std::span<const double> gt) {
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += loss_path_length(pred[i], gt[i]);
  return s / static_cast<double>(pred.size());
}

template struct Branch<float>;
template struct Branch<double>;
template class BranchEvaluator<float>;
template class BranchEvaluator<double>;
template Branch<float> init_branch<float>(const NetworkShape&, HeadOutput, Rng&);
template Branch<double> init_branch<double>(const NetworkShape&, HeadOutput, Rng&);
template ValueModelT<float> init_value_model<float>(const NetworkShape&, std::uint64_t);
template ValueModelT<double> init_value_model<double>(const NetworkShape&, std::uint64_t);
template Branch<float> zeros_like(const Branch<float>&);
template Branch<double> zeros_like(const Branch<double>&);
template ValueModelT<float> zeros_like(const ValueModelT<float>&);
template ValueModelT<double> zeros_like(const ValueModelT<double>&);
template VectorX<float> encode_cloud(const Mlp<float>&, const MatrixX<float>&);
template VectorX<double> encode_cloud(const Mlp<double>&, const MatrixX<double>&);
template MatrixX<float> poses_matrix<float>(std::span<const Pose>);
template MatrixX<double> poses_matrix<double>(std::span<const Pose>);

}  // namespace nmf
