#include "tvmf/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "tvmf/errors.hpp"

namespace tvmf {

namespace {

constexpr const char* kCheckpointMagic = "TVMF1";

// Same-padded convolution on row-per-pixel activations (pixels x channels).
// Weight column (ch * k + ky) * k + kx holds tap (ky, kx) of input channel ch, so
// each tap is a strided (out x in) block, applied to one contiguous row range per
// output image row.
using TapBlock = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
using MutableTapBlock = Eigen::Map<Eigen::MatrixXd, 0, Eigen::OuterStride<>>;

template <typename Fn>
void for_each_tap_run(int height, int width, int k, Fn&& fn) {
  const int r = k / 2;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      const int x0 = std::max(0, r - kx);
      const int x1 = std::min(width, width + r - kx);
      if (x1 <= x0) continue;
      for (int y = 0; y < height; ++y) {
        const int sy = y + ky - r;
        if (sy < 0 || sy >= height) continue;
        // output rows [dst, dst + len) read input rows [src, src + len)
        fn(ky * k + kx, static_cast<Eigen::Index>(y) * width + x0,
           static_cast<Eigen::Index>(sy) * width + x0 + kx - r, static_cast<Eigen::Index>(x1 - x0));
      }
    }
  }
}

TapBlock tap(const Eigen::MatrixXd& w, int t, Eigen::Index in_channels, int kk) {
  return TapBlock(w.data() + static_cast<Eigen::Index>(t) * w.rows(), w.rows(), in_channels,
                  Eigen::OuterStride<>(w.rows() * kk));
}

MutableTapBlock tap(Eigen::MatrixXd& w, int t, Eigen::Index in_channels, int kk) {
  return MutableTapBlock(w.data() + static_cast<Eigen::Index>(t) * w.rows(), w.rows(), in_channels,
                         Eigen::OuterStride<>(w.rows() * kk));
}

// pixels x out
Eigen::MatrixXd conv(const Eigen::MatrixXd& act, const Eigen::MatrixXd& w, const Eigen::VectorXd& bias,
                     int height, int width, int k) {
  Eigen::MatrixXd out(act.rows(), w.rows());
  out.rowwise() = bias.transpose();
  for_each_tap_run(height, width, k, [&](int t, Eigen::Index dst, Eigen::Index src, Eigen::Index len) {
    out.middleRows(dst, len).noalias() += act.middleRows(src, len) * tap(w, t, act.cols(), k * k).transpose();
  });
  return out;
}

// Accumulates d w and d b; returns d act when wanted.
void conv_backward(const Eigen::MatrixXd& act, const Eigen::MatrixXd& w, const Eigen::MatrixXd& d_out,
                   int height, int width, int k, Eigen::MatrixXd& d_w, Eigen::VectorXd& d_b,
                   Eigen::MatrixXd* d_act) {
  d_b += d_out.colwise().sum().transpose();
  if (d_act) d_act->setZero(act.rows(), act.cols());
  for_each_tap_run(height, width, k, [&](int t, Eigen::Index dst, Eigen::Index src, Eigen::Index len) {
    tap(d_w, t, act.cols(), k * k).noalias() += d_out.middleRows(dst, len).transpose() * act.middleRows(src, len);
    if (d_act) d_act->middleRows(src, len).noalias() += d_out.middleRows(dst, len) * tap(w, t, act.cols(), k * k);
  });
}

void require_finite(const ModelParams& grads, std::int64_t iteration) {
  if (!grads.all_finite()) {
    throw NumericalError("non-finite gradient at iteration " + std::to_string(iteration));
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (num_classes > 256) throw ConfigError("num_classes must be <= 256");
  if (hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd and positive");
}

ModelParams ModelParams::zeros(const ModelSpec& spec) {
  spec.validate();
  const int kk = spec.kernel_size * spec.kernel_size;
  ModelParams p;
  p.spec = spec;
  p.w1 = Eigen::MatrixXd::Zero(spec.hidden_width, spec.in_channels * kk);
  p.b1 = Eigen::VectorXd::Zero(spec.hidden_width);
  p.w2 = Eigen::MatrixXd::Zero(spec.num_classes, spec.hidden_width * kk);
  p.b2 = Eigen::VectorXd::Zero(spec.num_classes);
  return p;
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index at = 0;
  auto put_rows = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) flat(at++) = m(i, j);
  };
  put_rows(w1);
  flat.segment(at, b1.size()) = b1;
  at += b1.size();
  put_rows(w2);
  flat.segment(at, b2.size()) = b2;
  return flat;
}

void ModelParams::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != parameter_count()) throw DimensionError("parameter vector has wrong length");
  Eigen::Index at = 0;
  auto take_rows = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat(at++);
  };
  take_rows(w1);
  b1 = flat.segment(at, b1.size());
  at += b1.size();
  take_rows(w2);
  b2 = flat.segment(at, b2.size());
}

bool ModelParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

bool ModelParams::operator==(const ModelParams& other) const {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return spec == other.spec && same(w1, other.w1) && same(b1, other.b1) && same(w2, other.w2) &&
         same(b2, other.b2);
}

ModelParams init_model(const ModelSpec& spec) {
  ModelParams p = ModelParams::zeros(spec);
  std::mt19937_64 rng(spec.seed);
  auto fill = [&rng](Eigen::MatrixXd& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
  };
  fill(p.w1);
  fill(p.w2);
  return p;
}

ForwardResult forward(const ModelParams& params, std::span<const ImagePlanes> images, int height,
                      int width) {
  const ModelSpec& spec = params.spec;
  if (height < 1 || width < 1) throw DimensionError("forward: image size must be positive");
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  const int k = spec.kernel_size;

  ForwardResult out;
  ForwardCache& cache = out.cache;
  cache.height = height;
  cache.width = width;
  out.probs.resize(spec.num_classes, pixels * static_cast<Eigen::Index>(images.size()));

  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImagePlanes& img = images[i];
    if (img.rows() != spec.in_channels || img.cols() != pixels) {
      throw DimensionError("forward: image " + std::to_string(i) + " has shape " +
                           std::to_string(img.rows()) + "x" + std::to_string(img.cols()));
    }
    if (!img.allFinite()) throw NumericalError("forward: non-finite input in image " + std::to_string(i));

    Eigen::MatrixXd input = img.transpose();
    Eigen::MatrixXd pre1 = conv(input, params.w1, params.b1, height, width, k);
    Eigen::MatrixXd logits = conv(pre1.cwiseMax(0.0), params.w2, params.b2, height, width, k);

    logits.colwise() -= logits.rowwise().maxCoeff();
    Eigen::ArrayXXd e = logits.array().exp();
    e.colwise() /= e.rowwise().sum();
    out.probs.middleCols(static_cast<Eigen::Index>(i) * pixels, pixels) = e.matrix().transpose();

    cache.input.push_back(std::move(input));
    cache.pre1.push_back(std::move(pre1));
  }
  cache.probs = out.probs;
  return out;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     const Eigen::Ref<const Eigen::MatrixXd>& grad_probs) {
  const ModelSpec& spec = params.spec;
  const int k = spec.kernel_size;
  const Eigen::Index pixels = static_cast<Eigen::Index>(cache.height) * cache.width;
  const auto batch = static_cast<Eigen::Index>(cache.input.size());
  if (cache.probs.rows() != spec.num_classes || cache.probs.cols() != pixels * batch ||
      (batch > 0 && (cache.input.front().cols() != spec.in_channels ||
                     cache.pre1.front().cols() != spec.hidden_width))) {
    throw ConfigError("backward: cache does not match model parameters");
  }
  if (grad_probs.rows() != cache.probs.rows() || grad_probs.cols() != cache.probs.cols()) {
    throw DimensionError("backward: gradient shape does not match predictions");
  }

  ModelParams grads = ModelParams::zeros(spec);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Eigen::MatrixXd probs = cache.probs.middleCols(i * pixels, pixels).transpose();
    const Eigen::MatrixXd g = grad_probs.middleCols(i * pixels, pixels).transpose();

    // softmax Jacobian: dz = p * (g - <p, g>)
    const Eigen::VectorXd inner = probs.cwiseProduct(g).rowwise().sum();
    const Eigen::MatrixXd d_logits = probs.cwiseProduct(g.colwise() - inner);

    const Eigen::MatrixXd hidden = cache.pre1[idx].cwiseMax(0.0);
    Eigen::MatrixXd d_pre1;
    conv_backward(hidden, params.w2, d_logits, cache.height, cache.width, k, grads.w2, grads.b2, &d_pre1);
    d_pre1.array() *= (cache.pre1[idx].array() > 0.0).cast<double>();
    conv_backward(cache.input[idx], params.w1, d_pre1, cache.height, cache.width, k, grads.w1, grads.b1, nullptr);
  }
  return grads;
}

OptimizerState OptimizerState::for_model(const ModelParams& params, std::int64_t iteration_max) {
  OptimizerState s;
  s.momentum_buffers = ModelParams::zeros(params.spec);
  s.iteration_max = iteration_max;
  return s;
}

double lr_at(const OptimizerState& state) {
  if (state.iteration_max < 1) throw ConfigError("iteration_max must be >= 1");
  if (state.iteration < 0 || state.iteration > state.iteration_max) {
    throw ConfigError("iteration " + std::to_string(state.iteration) + " outside [0, " +
                      std::to_string(state.iteration_max) + "]");
  }
  const double progress = static_cast<double>(state.iteration) / static_cast<double>(state.iteration_max);
  return state.lr0 * std::pow(1.0 - progress, 0.9);
}

void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state) {
  if (grads.parameter_count() != params.parameter_count() ||
      state.momentum_buffers.parameter_count() != params.parameter_count()) {
    throw DimensionError("sgd_step: parameter, gradient and buffer shapes differ");
  }
  require_finite(grads, state.iteration);
  if (state.iteration >= state.iteration_max) {
    throw ConfigError("sgd_step: iteration budget exhausted");
  }
  const double lr = lr_at(state);
  auto update = [&](auto& param, const auto& grad, auto& buffer) {
    buffer = state.momentum * buffer + (grad + state.weight_decay * param);
    param -= lr * buffer;
  };
  ModelParams& buf = state.momentum_buffers;
  update(params.w1, grads.w1, buf.w1);
  update(params.b1, grads.b1, buf.b1);
  update(params.w2, grads.w2, buf.w2);
  update(params.b2, grads.b2, buf.b2);
  ++state.iteration;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  const ModelSpec& s = params.spec;
  out << kCheckpointMagic << '\n'
      << s.in_channels << ' ' << s.num_classes << ' ' << s.hidden_width << ' ' << s.kernel_size << ' '
      << s.seed << '\n';
  const Eigen::VectorXd flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) detail::write_f64(out, flat(i));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::size_t offset = 0;
  if (detail::read_line(in, offset, 16, "checkpoint magic") != kCheckpointMagic) {
    throw FormatError("bad checkpoint magic in " + path.string(), 0);
  }
  const std::size_t header_at = offset;
  std::istringstream header(detail::read_line(in, offset, 256, "checkpoint header"));
  ModelSpec spec;
  std::string extra;
  if (!(header >> spec.in_channels >> spec.num_classes >> spec.hidden_width >> spec.kernel_size >>
        spec.seed) ||
      (header >> extra)) {
    throw FormatError("malformed checkpoint header", header_at);
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint spec: ") + e.what(), header_at);
  }
  ModelParams params = ModelParams::zeros(spec);
  Eigen::VectorXd flat(params.parameter_count());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = detail::read_f64(in, offset, "checkpoint payload");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint", offset);
  params.assign(flat);
  return params;
}

}  // namespace tvmf
