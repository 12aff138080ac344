#include "tvmf/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <random>

#include "tvmf/errors.hpp"
#include "tvmf/scheduler.hpp"

namespace tvmf {

namespace {

// Independent random streams derived from the run seed.
enum class Stream : std::uint32_t { Split = 2, Train = 3 };

std::mt19937_64 make_stream(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// FNV-1a over everything that determines which pixels a batch sees.
class OrderDigest {
 public:
  void add(std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (word >> (8 * i)) & 0xFFu;
      state_ *= 0x100000001b3ULL;
    }
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

struct Batch {
  std::vector<ImagePlanes> images;
  Eigen::MatrixXd target;
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, const std::vector<AugmentParams>* aug) {
  Batch b;
  const Eigen::Index pixels = static_cast<Eigen::Index>(ds.height) * ds.width;
  b.images.reserve(indices.size());
  b.target.resize(ds.num_classes, pixels * static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& raw = ds.samples[indices[i]];
    const Sample s = aug ? apply_augmentation(raw, (*aug)[i]) : raw;
    b.images.push_back(to_planes(s));
    b.target.middleCols(static_cast<Eigen::Index>(i) * pixels, pixels) = one_hot_encode(s.label, ds.num_classes);
  }
  return b;
}

void require_dataset_matches(const ExperimentConfig& cfg, const Dataset& ds) {
  if (ds.num_classes != cfg.model.num_classes) {
    throw ConfigError("dataset has " + std::to_string(ds.num_classes) + " classes, model expects " +
                      std::to_string(cfg.model.num_classes));
  }
}

}  // namespace

void LossConfig::validate() const {
  static const std::vector<std::string> known = {"dice", "normalized_dice", "tvmf", "generalized_dice",
                                                 "focal_tversky"};
  if (std::find(known.begin(), known.end(), name) == known.end()) {
    throw ConfigError("unknown loss '" + name + "'");
  }
  if (!(gamma >= 0.0)) throw ConfigError("loss gamma must be >= 0");
  if (is_tvmf()) {
    if (kappa.has_value() == lambda.has_value()) {
      throw ConfigError("tvmf loss needs exactly one of kappa (fixed) or lambda (adaptive)");
    }
    if (kappa && !(*kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
    if (lambda && !(*lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  } else if (kappa || lambda) {
    throw ConfigError("kappa/lambda only apply to the tvmf loss");
  }
  if (name == "focal_tversky") {
    const auto& t = tversky;
    if (!(t.alpha >= 0 && t.alpha <= 1 && t.beta >= 0 && t.beta <= 1 && t.focal_gamma > 0)) {
      throw ConfigError("focal tversky needs alpha, beta in [0, 1] and focal_gamma > 0");
    }
  }
}

LossResult<double> evaluate_loss(const LossConfig& loss, const Eigen::Ref<const Eigen::MatrixXd>& pred,
                                 const Eigen::Ref<const Eigen::MatrixXd>& target,
                                 const std::vector<double>& kappas) {
  if (loss.name == "dice") return dice_loss(pred, target, loss.gamma);
  if (loss.name == "normalized_dice") return normalized_dice_loss(pred, target, loss.gamma);
  if (loss.name == "tvmf") return t_vmf_dice_loss(pred, target, kappas, loss.gamma);
  if (loss.name == "generalized_dice") return generalized_dice_loss(pred, target, loss.gamma);
  if (loss.name == "focal_tversky") return focal_tversky_loss(pred, target, loss.tversky, loss.gamma);
  throw ConfigError("unknown loss '" + loss.name + "'");
}

SplitIndices split_indices(std::size_t n, const SplitFractions& f, std::uint64_t split_seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = make_stream(split_seed, Stream::Split);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train)));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size()),
               order.begin() + static_cast<std::ptrdiff_t>(s.train.size() + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size() + n_val), order.end());
  return s;
}

void ExperimentConfig::validate() const {
  loss.validate();
  model.validate();
  if (model.in_channels != 1) throw ConfigError("synthetic datasets are single-channel");
  if (!dataset_path) {
    dataset.validate();
    if (model.num_classes != dataset.num_classes) {
      throw ConfigError("model and dataset class counts differ");
    }
  }
  if (!(split.train > 0 && split.val > 0 && split.test > 0)) throw ConfigError("split fractions must be positive");
  if (!(std::abs(split.train + split.val + split.test - 1.0) <= 1e-9)) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr0 >= 0.0)) throw ConfigError("lr0 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(eval_gamma >= 0.0)) throw ConfigError("eval_gamma must be >= 0");
}

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, std::span<const std::size_t> indices,
                       double gamma) {
  if (params.spec.num_classes != dataset.num_classes) {
    throw ConfigError("checkpoint has " + std::to_string(params.spec.num_classes) +
                      " classes, dataset has " + std::to_string(dataset.num_classes));
  }
  DscCounts counts(static_cast<std::size_t>(dataset.num_classes));
  constexpr std::size_t chunk = 8;
  for (std::size_t at = 0; at < indices.size(); at += chunk) {
    const auto part = indices.subspan(at, std::min(chunk, indices.size() - at));
    const Batch b = make_batch(dataset, part, nullptr);
    const auto fwd = forward(params, b.images, dataset.height, dataset.width);
    const LabelMap pred = hard_masks(fwd.probs);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const std::size_t pixels = dataset.samples[part[i]].label.size();
      counts.accumulate(std::span<const std::uint8_t>(pred).subspan(i * pixels, pixels),
                        dataset.samples[part[i]].label);
    }
  }
  return report_from_counts(counts, gamma);
}

SplitName parse_split_name(const std::string& name) {
  if (name == "train") return SplitName::Train;
  if (name == "val") return SplitName::Val;
  if (name == "test") return SplitName::Test;
  if (name == "all") return SplitName::All;
  throw ConfigError("unknown split '" + name + "'");
}

MetricsReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_path,
                       SplitName split, const SplitFractions& fractions, std::uint64_t split_seed,
                       double gamma) {
  const ModelParams params = load_checkpoint(checkpoint);
  const Dataset ds = load_dataset(dataset_path);
  const SplitIndices s = split_indices(ds.samples.size(), fractions, split_seed);
  std::vector<std::size_t> all(ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  switch (split) {
    case SplitName::Train:
      return evaluate(params, ds, s.train, gamma);
    case SplitName::Val:
      return evaluate(params, ds, s.val, gamma);
    case SplitName::Test:
      return evaluate(params, ds, s.test, gamma);
    case SplitName::All:
      break;
  }
  return evaluate(params, ds, all, gamma);
}

RunRecord run_training(const ExperimentConfig& config) {
  if (config.dataset_path) {
    const Dataset ds = load_dataset(*config.dataset_path);
    ExperimentConfig cfg = config;
    cfg.model.num_classes = ds.num_classes;
    return run_training(cfg, ds);
  }
  config.validate();
  return run_training(config, generate_dataset(config.dataset));
}

RunRecord run_training(const ExperimentConfig& config, const Dataset& dataset) {
  config.validate();
  require_dataset_matches(config, dataset);
  const SplitIndices split = split_indices(dataset.samples.size(), config.split, config.effective_split_seed());
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw ConfigError("dataset of " + std::to_string(dataset.samples.size()) +
                      " samples leaves an empty split");
  }

  const auto classes = static_cast<std::size_t>(dataset.num_classes);
  const auto batches_per_epoch =
      static_cast<std::int64_t>((split.train.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                static_cast<std::size_t>(config.batch_size));

  ModelParams params = init_model(config.model);
  OptimizerState opt = OptimizerState::for_model(params, batches_per_epoch * config.epochs);
  opt.lr0 = config.lr0;
  opt.momentum = config.momentum;
  opt.weight_decay = config.weight_decay;

  const LossConfig& loss = config.loss;
  KappaSchedule schedule(classes, loss.lambda.value_or(0.0));
  std::vector<double> kappas;
  if (loss.is_tvmf()) kappas = loss.is_adaptive() ? schedule.kappas() : std::vector<double>(classes, *loss.kappa);

  RunRecord record;
  record.loss_name = loss.name;
  record.kappa = loss.kappa;
  record.lambda = loss.lambda;
  record.seed = config.seed;
  record.num_classes = dataset.num_classes;

  auto rng = make_stream(config.seed, Stream::Train);
  OrderDigest digest;
  std::vector<std::size_t> order = split.train;
  ModelParams best = params;
  double best_score = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    row.lr = lr_at(opt);
    row.kappas = kappas;

    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::int64_t batch_no = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size), ++batch_no) {
      const std::span<const std::size_t> ids(order.data() + at,
                                             std::min(order.size() - at, static_cast<std::size_t>(config.batch_size)));
      std::vector<AugmentParams> aug;
      for (std::size_t id : ids) {
        digest.add(static_cast<std::uint64_t>(id));
        if (config.augment) {
          aug.push_back(draw_augmentation(rng));
          digest.add(static_cast<std::uint64_t>(aug.back().flip));
          digest.add(aug.back().angle_degrees);
        }
      }
      const Batch b = make_batch(dataset, ids, config.augment ? &aug : nullptr);
      const auto fwd = forward(params, b.images, dataset.height, dataset.width);
      const LossResult<double> result = evaluate_loss(loss, fwd.probs, b.target, kappas);
      if (!std::isfinite(result.value) || !result.grad.allFinite()) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
      }
      loss_sum += result.value;
      sgd_step(params, backward(params, fwd.cache, result.grad), opt);
    }
    row.train_loss = loss_sum / static_cast<double>(batch_no);

    const MetricsReport val = evaluate(params, dataset, split.val, config.eval_gamma);
    row.val_dsc = val.per_class_dsc;
    if (loss.is_adaptive()) {
      schedule.update_from_validation(val.per_class_dsc);
      kappas = schedule.kappas();
    }
    if (val.mean_dsc > best_score) {
      best_score = val.mean_dsc;
      best = params;
      record.best_epoch = epoch;
    }
    record.epochs.push_back(std::move(row));
  }

  record.data_order_digest = digest.hex();
  record.test = evaluate(best, dataset, split.test, config.eval_gamma);

  if (config.out_dir) {
    ensure_directory(*config.out_dir);
    save_checkpoint(*config.out_dir / "checkpoint.tvmf", best);
    write_report(record, *config.out_dir);
  }
  return record;
}

}  // namespace tvmf
