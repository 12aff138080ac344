#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "tvmf/errors.hpp"
#include "tvmf/experiment.hpp"
#include "tvmf/grad_check.hpp"
#include "tvmf/model.hpp"

using namespace tvmf;

namespace {

ModelSpec small_spec(int classes = 3, std::uint64_t seed = 7) {
  ModelSpec s;
  s.num_classes = classes;
  s.hidden_width = 4;
  s.seed = seed;
  return s;
}

std::vector<ImagePlanes> random_images(std::mt19937_64& rng, int count, int pixels, int channels = 1) {
  std::vector<ImagePlanes> out;
  for (int i = 0; i < count; ++i) {
    ImagePlanes img(channels, pixels);
    for (Eigen::Index j = 0; j < img.size(); ++j) img(j) = testing::uniform(rng, 0, 1);
    out.push_back(img);
  }
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tvmf_model_" + name);
}

// Direct nested-loop evaluation of the two-layer network on one image.
Eigen::MatrixXd naive_forward(const ModelParams& p, const ImagePlanes& img, int height, int width) {
  const ModelSpec& s = p.spec;
  const int k = s.kernel_size, r = k / 2;
  auto conv = [&](const Eigen::MatrixXd& in, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
    // in: channels x pixels, result: out x pixels
    Eigen::MatrixXd out(w.rows(), in.cols());
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          double acc = b(o);
          for (Eigen::Index ch = 0; ch < in.rows(); ++ch) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int sy = y + ky - r, sx = x + kx - r;
                if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
                acc += w(o, (ch * k + ky) * k + kx) * in(ch, sy * width + sx);
              }
            }
          }
          out(o, y * width + x) = acc;
        }
      }
    }
    return out;
  };
  const Eigen::MatrixXd hidden = conv(img, p.w1, p.b1).cwiseMax(0.0);
  Eigen::MatrixXd logits = conv(hidden, p.w2, p.b2);
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    const double m = logits.col(n).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.rows(); ++c) z += std::exp(logits(c, n) - m);
    for (Eigen::Index c = 0; c < logits.rows(); ++c) logits(c, n) = std::exp(logits(c, n) - m) / z;
  }
  return logits;
}

}  // namespace

TEST_CASE("forward matches a direct convolution") {
  std::mt19937_64 rng(12);
  for (int k : {1, 3, 5}) {
    CAPTURE(k);
    ModelSpec spec = small_spec(4, 30 + static_cast<std::uint64_t>(k));
    spec.in_channels = 2;
    spec.kernel_size = k;
    auto params = init_model(spec);
    for (Eigen::Index i = 0; i < params.b1.size(); ++i) params.b1(i) = testing::uniform(rng, -0.2, 0.2);
    for (Eigen::Index i = 0; i < params.b2.size(); ++i) params.b2(i) = testing::uniform(rng, -0.2, 0.2);
    const auto images = random_images(rng, 2, 7 * 4, 2);
    const auto out = forward(params, images, 7, 4);
    for (int i = 0; i < 2; ++i) {
      const Eigen::MatrixXd expected = naive_forward(params, images[static_cast<std::size_t>(i)], 7, 4);
      CHECK((out.probs.middleCols(i * 28, 28) - expected).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("init is deterministic and shaped") {
  ModelSpec spec;
  spec.num_classes = 4;
  spec.seed = 42;
  const auto a = init_model(spec);
  const auto b = init_model(spec);
  CHECK(a == b);
  CHECK(a.w1.size() == 144);
  CHECK(a.w2.size() == 4 * 16 * 9);
  CHECK(a.b1.isZero());
  CHECK(a.b2.isZero());
  CHECK(a.w1.cwiseAbs().maxCoeff() <= 1.0 / 3.0);

  spec.seed = 43;
  CHECK_FALSE(init_model(spec) == a);

  ModelSpec bad = spec;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(init_model(bad), ConfigError);
  bad = spec;
  bad.num_classes = 1;
  CHECK_THROWS_AS(init_model(bad), ConfigError);
}

TEST_CASE("forward produces per-pixel distributions") {
  std::mt19937_64 rng(1);
  const auto params = init_model(small_spec(4));
  const auto images = random_images(rng, 3, 6 * 5);
  const auto out = forward(params, images, 6, 5);
  CHECK(out.probs.rows() == 4);
  CHECK(out.probs.cols() == 3 * 30);
  CHECK((out.probs.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(out.probs.minCoeff() > 0.0);
  CHECK(out.probs.maxCoeff() < 1.0);

  const auto zero = ModelParams::zeros(small_spec(4));
  const auto flat = forward(zero, images, 6, 5);
  CHECK((flat.probs.array() - 0.25).abs().maxCoeff() <= 1e-15);

  auto broken = images;
  broken[1](0, 3) = NAN;
  CHECK_THROWS_AS(forward(params, broken, 6, 5), NumericalError);
  CHECK_THROWS_AS(forward(params, images, 5, 5), DimensionError);
}

TEST_CASE("forward stays on the simplex for large weights") {
  std::mt19937_64 rng(2);
  auto params = init_model(small_spec(3));
  params.w2 *= 200.0;
  const auto out = forward(params, random_images(rng, 1, 16), 4, 4);
  CHECK(out.probs.allFinite());
  CHECK((out.probs.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("backward is linear in the output gradient") {
  std::mt19937_64 rng(3);
  const auto params = init_model(small_spec(3));
  const auto fwd = forward(params, random_images(rng, 2, 25), 5, 5);

  const auto zero = backward(params, fwd.cache, Eigen::MatrixXd::Zero(3, 50));
  CHECK(zero.flatten().isZero());

  const Eigen::MatrixXd g = testing::random_prediction(rng, 3, 50) - Eigen::MatrixXd::Constant(3, 50, 0.3);
  const auto once = backward(params, fwd.cache, g);
  const auto twice = backward(params, fwd.cache, 2.0 * g);
  CHECK((twice.flatten() - 2.0 * once.flatten()).cwiseAbs().maxCoeff() <= 1e-14);

  CHECK_THROWS_AS(backward(params, fwd.cache, Eigen::MatrixXd::Zero(3, 49)), DimensionError);
  const auto other = init_model(small_spec(4));
  CHECK_THROWS_AS(backward(other, fwd.cache, Eigen::MatrixXd::Zero(4, 50)), ConfigError);
}

TEST_CASE("model plus loss gradients match finite differences over parameters") {
  std::mt19937_64 rng(4);
  ModelSpec spec = small_spec(3, 11);
  spec.hidden_width = 5;
  const auto params = init_model(spec);
  const auto images = random_images(rng, 1, 64);
  const Eigen::MatrixXd target = testing::random_onehot(rng, 3, 64);

  std::vector<LossConfig> losses(5);
  losses[0].name = "dice";
  losses[1].name = "normalized_dice";
  losses[2].name = "tvmf";
  losses[2].kappa = 32.0;
  losses[3].name = "generalized_dice";
  losses[4].name = "focal_tversky";
  const std::vector<double> kappas{4.0, 32.0, 16.0};

  for (const auto& loss : losses) {
    CAPTURE(loss.name);
    const auto fwd = forward(params, images, 8, 8);
    const auto result = evaluate_loss(loss, fwd.probs, target, kappas);
    const Eigen::VectorXd analytic = backward(params, fwd.cache, result.grad).flatten();

    auto objective = [&](const Eigen::MatrixXd& flat) {
      ModelParams probe = params;
      probe.assign(flat.col(0));
      return evaluate_loss(loss, forward(probe, images, 8, 8).probs, target, kappas).value;
    };
    const Eigen::MatrixXd numeric = finite_difference_gradient(objective, Eigen::MatrixXd(params.flatten()), 1e-5);
    const auto report = assert_gradients_match(Eigen::MatrixXd(analytic), numeric, 1e-4);
    CAPTURE(report.max_rel_error);
    CHECK(report.passed);
  }
}

TEST_CASE("parameter gradients with several input channels and a wide kernel") {
  std::mt19937_64 rng(5);
  ModelSpec spec = small_spec(3, 17);
  spec.in_channels = 2;
  spec.kernel_size = 5;
  spec.hidden_width = 3;
  const auto params = init_model(spec);
  const auto images = random_images(rng, 2, 6 * 7, 2);
  const Eigen::MatrixXd target = testing::random_onehot(rng, 3, 2 * 42);
  LossConfig loss;
  const auto fwd = forward(params, images, 6, 7);
  const Eigen::VectorXd analytic = backward(params, fwd.cache, evaluate_loss(loss, fwd.probs, target, {}).grad).flatten();
  auto objective = [&](const Eigen::MatrixXd& flat) {
    ModelParams probe = params;
    probe.assign(flat.col(0));
    return evaluate_loss(loss, forward(probe, images, 6, 7).probs, target, {}).value;
  };
  const Eigen::MatrixXd numeric = finite_difference_gradient(objective, Eigen::MatrixXd(params.flatten()), 1e-5);
  const auto report = assert_gradients_match(Eigen::MatrixXd(analytic), numeric, 1e-4);
  CAPTURE(report.max_rel_error);
  CHECK(report.passed);
}

TEST_CASE("polynomial learning rate") {
  auto state = OptimizerState::for_model(init_model(small_spec()), 100);
  CHECK(lr_at(state) == 0.01);
  state.iteration = 100;
  CHECK(lr_at(state) == 0.0);
  state.iteration = 50;
  CHECK(lr_at(state) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-15));
  CHECK(lr_at(state) == doctest::Approx(0.005359).epsilon(1e-4));
  state.iteration = 101;
  CHECK_THROWS_AS(lr_at(state), ConfigError);
}

TEST_CASE("sgd step") {
  const ModelSpec spec = small_spec();
  ModelParams params = init_model(spec);
  const ModelParams start = params;
  const ModelParams zero = ModelParams::zeros(spec);

  auto state = OptimizerState::for_model(params, 10);
  state.weight_decay = 0.0;
  sgd_step(params, zero, state);
  CHECK(params == start);
  CHECK(state.iteration == 1);

  std::mt19937_64 rng(5);
  ModelParams grads = ModelParams::zeros(spec);
  Eigen::VectorXd g(grads.parameter_count());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = testing::uniform(rng, -1, 1);
  grads.assign(g);
  auto plain = OptimizerState::for_model(params, 10);
  plain.momentum = 0.0;
  plain.weight_decay = 0.0;
  const double lr = lr_at(plain);
  ModelParams stepped = start;
  sgd_step(stepped, grads, plain);
  CHECK((stepped.flatten() - (start.flatten() - lr * g)).cwiseAbs().maxCoeff() == 0.0);

  ModelParams ones = ModelParams::zeros(spec);
  ones.assign(Eigen::VectorXd::Ones(ones.parameter_count()));
  auto decay = OptimizerState::for_model(ones, 10);
  sgd_step(ones, zero, decay);
  CHECK((ones.flatten().array() - 0.999998).abs().maxCoeff() <= 1e-15);

  ModelParams nan_grads = zero;
  nan_grads.b2(0) = NAN;
  CHECK_THROWS_AS(sgd_step(ones, nan_grads, decay), NumericalError);

  auto spent = OptimizerState::for_model(ones, 1);
  sgd_step(ones, zero, spent);
  CHECK_THROWS_AS(sgd_step(ones, zero, spent), ConfigError);
}

TEST_CASE("checkpoint round trip and corruption") {
  ModelSpec spec = small_spec(4, 99);
  const auto params = init_model(spec);
  const auto path = temp_path("ckpt.tvmf");
  save_checkpoint(path, params);
  CHECK(load_checkpoint(path) == params);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  CHECK(bytes.rfind("TVMF1\n1 4 4 3 99\n", 0) == 0);
  CHECK(bytes.size() == std::string("TVMF1\n1 4 4 3 99\n").size() + 8 * static_cast<std::size_t>(params.parameter_count()));

  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write("TVMF2" + bytes.substr(5));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  write(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  write(bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
