#pragma once

#include "nmf/geometry.hpp"
#include "nmf/random.hpp"
#include "nmf/scene.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace nmf {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// y = W x + b, with W stored out x in.
template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weight;
  VectorX<Scalar> bias;

  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

template <typename Scalar>
struct Mlp {
  std::vector<DenseLayer<Scalar>> layers;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.back().weight.rows(); }
  bool operator==(const Mlp&) const = default;
};

enum class HeadOutput { softplus, sigmoid };

/// Point-cloud encoder (per-point MLP, ReLU after every layer, max-pool) and a
/// head over concat(feature, pose9) with ReLU hidden layers and a scalar output.
template <typename Scalar>
struct Branch {
  Mlp<Scalar> encoder;
  Mlp<Scalar> head;
  HeadOutput output = HeadOutput::softplus;

  Eigen::Index feature_dim() const { return encoder.output_dim(); }
  std::size_t parameter_count() const;
  bool operator==(const Branch&) const = default;
};

/// Path-length and collision branches; they share no parameters.
template <typename Scalar>
struct ValueModelT {
  Branch<Scalar> path;
  Branch<Scalar> collision;

  bool operator==(const ValueModelT&) const = default;
};

using ValueModel = ValueModelT<float>;

struct NetworkShape {
  std::vector<int> encoder_widths{3, 64, 128, 512};
  std::vector<int> head_hidden{256, 256, 256, 256};

  void validate() const;
};

inline constexpr int kPoseDim = 9;

/// He-uniform fan-in weights, zero biases.
template <typename Scalar>
Branch<Scalar> init_branch(const NetworkShape& shape, HeadOutput output, Rng& rng);
template <typename Scalar>
ValueModelT<Scalar> init_value_model(const NetworkShape& shape, std::uint64_t seed);

template <typename Scalar>
ValueModelT<Scalar> zeros_like(const ValueModelT<Scalar>& m);
template <typename Scalar>
Branch<Scalar> zeros_like(const Branch<Scalar>& b);

/// Apply f(tensor_a, tensor_b, ...) over matching weight and bias arrays.
template <typename Scalar, typename F, typename... Rest>
void for_each_tensor(F&& f, Branch<Scalar>& first, Rest&... rest) {
  auto visit_mlp = [&](auto member) {
    auto& layers = (first.*member).layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      f(layers[i].weight.array(), (rest.*member).layers[i].weight.array()...);
      f(layers[i].bias.array(), (rest.*member).layers[i].bias.array()...);
    }
  };
  visit_mlp(&Branch<Scalar>::encoder);
  visit_mlp(&Branch<Scalar>::head);
}

template <typename Scalar>
MatrixX<Scalar> cloud_matrix(const PointCloud& cloud) {
  return cloud.points.cast<Scalar>();
}

/// Max-pooled encoder feature of a cloud (3 x N).
template <typename Scalar>
VectorX<Scalar> encode_cloud(const Mlp<Scalar>& encoder, const MatrixX<Scalar>& points);
template <typename Scalar>
VectorX<Scalar> encode_cloud(const Mlp<Scalar>& encoder, const PointCloud& cloud) {
  return encode_cloud(encoder, cloud_matrix<Scalar>(cloud));
}

double softplus(double z);
double sigmoid(double z);
/// Output activation with the probability kept strictly inside (0, 1).
double apply_output(HeadOutput out, double z);

/// One branch specialized to a fixed cloud: the feature contribution to the
/// first head layer is folded into its bias, so a pose query costs only the
/// head's pose columns and hidden layers.
template <typename Scalar>
class BranchEvaluator {
 public:
  BranchEvaluator(const Branch<Scalar>& branch, const PointCloud& cloud);

  /// Pre-activation head outputs for poses (9 x B).
  void logits(const MatrixX<Scalar>& poses, std::span<double> out) const;
  /// Post-activation outputs (path length in meters or collision probability).
  void evaluate(const MatrixX<Scalar>& poses, std::span<double> out) const;
  double evaluate(const Pose& g) const;

  const VectorX<Scalar>& feature() const { return feature_; }

 private:
  const Branch<Scalar>* branch_;
  VectorX<Scalar> feature_;
  MatrixX<Scalar> pose_weight_;
  VectorX<Scalar> folded_bias_;
};

template <typename Scalar>
MatrixX<Scalar> poses_matrix(std::span<const Pose> poses);

double predict_path_length(const ValueModel& model, const PointCloud& cloud, const Pose& g);
double predict_collision(const ValueModel& model, const PointCloud& cloud, const Pose& g);

/// |pred - gt|.
double loss_path_length(double pred, double gt);
/// d loss / d pred with the subgradient at 0 taken as 0.
double loss_path_length_grad(double pred, double gt);
/// Binary cross-entropy with pred clamped to [1e-7, 1 - 1e-7].
double loss_collision(double pred, double gt);
/// d loss / d pred; zero where the clamp is active.
double loss_collision_grad(double pred, double gt);
double mean_loss_path_length(std::span<const double> pred, std::span<const double> gt);

extern template struct Branch<float>;
extern template struct Branch<double>;
extern template class BranchEvaluator<float>;
extern template class BranchEvaluator<double>;

}  // namespace nmf
