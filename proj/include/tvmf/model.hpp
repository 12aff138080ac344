#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace tvmf {

struct ModelSpec {
  int in_channels = 1;
  int num_classes = 2;
  int hidden_width = 16;
  int kernel_size = 3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Two same-padded convolutions: in -> hidden (ReLU) -> classes (softmax).
///
/// Kernels are stored as matrices with one row per output channel and columns
/// ordered (input channel, kernel row, kernel column), i.e. the row-major
/// layout [out][in][k][k]. Gradients and momentum buffers use the same type.
struct ModelParams {
  ModelSpec spec;
  Eigen::MatrixXd w1;  // hidden x (in * k * k)
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // classes x (hidden * k * k)
  Eigen::VectorXd b2;  // classes

  static ModelParams zeros(const ModelSpec& spec);
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  /// Parameters concatenated in declared order, each kernel row-major.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);
  bool all_finite() const;

  bool operator==(const ModelParams& other) const;
};

ModelParams init_model(const ModelSpec& spec);

/// A multi-channel image: one row per channel, pixels in row-major (y * width + x) order.
using ImagePlanes = Eigen::MatrixXd;

struct ForwardCache {
  int height = 0;
  int width = 0;
  std::vector<Eigen::MatrixXd> input;  // per image, pixels x in_channels
  std::vector<Eigen::MatrixXd> pre1;   // per image, pixels x hidden first-layer pre-activations
  Eigen::MatrixXd probs;               // classes x (batch * H * W)
};

struct ForwardResult {
  Eigen::MatrixXd probs;
  ForwardCache cache;
};

/// Column n of the output is pixel (n mod H*W) of image (n / H*W).
ForwardResult forward(const ModelParams& params, std::span<const ImagePlanes> images, int height,
                      int width);

/// Reverse-mode gradients of the forward pass given d loss / d probs.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     const Eigen::Ref<const Eigen::MatrixXd>& grad_probs);

struct OptimizerState {
  ModelParams momentum_buffers;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::int64_t iteration = 0;
  std::int64_t iteration_max = 1;

  static OptimizerState for_model(const ModelParams& params, std::int64_t iteration_max);
};

/// Polynomial decay lr0 * (1 - iteration / iteration_max)^0.9.
double lr_at(const OptimizerState& state);

/// One step of SGD with momentum and L2 weight decay, at the learning rate of the
/// current iteration; advances the iteration counter.
void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace tvmf
