#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tvmf/data.hpp"
#include "tvmf/errors.hpp"
#include "tvmf/experiment.hpp"

namespace {

using tvmf::ConfigMap;

// Registers "--flag" so that, when given, it overrides config key `key`.
void override_flag(CLI::App* app, ConfigMap& overrides, const std::string& flag, const std::string& key,
                   const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
}

void add_dataset_flags(CLI::App* app, ConfigMap& o) {
  override_flag(app, o, "--num-samples", "data.num_samples", "number of generated samples");
  override_flag(app, o, "--height", "data.height", "image height");
  override_flag(app, o, "--width", "data.width", "image width");
  override_flag(app, o, "--num-classes", "data.num_classes", "classes including background");
  override_flag(app, o, "--imbalance-ratio", "data.imbalance_ratio", "largest / smallest foreground area");
  override_flag(app, o, "--noise-sigma", "data.noise_sigma", "Gaussian intensity noise");
  override_flag(app, o, "--data-seed", "data.seed", "dataset seed (defaults to --seed)");
}

void add_split_flags(CLI::App* app, ConfigMap& o) {
  override_flag(app, o, "--split-train", "split.train", "training fraction");
  override_flag(app, o, "--split-val", "split.val", "validation fraction");
  override_flag(app, o, "--split-test", "split.test", "test fraction");
  override_flag(app, o, "--split-seed", "split.seed", "split permutation seed (defaults to --seed)");
}

ConfigMap merged(const std::string& config_path, const ConfigMap& overrides) {
  ConfigMap map = config_path.empty() ? ConfigMap{} : tvmf::load_config_file(config_path);
  for (const auto& [k, v] : overrides) map[k] = v;
  return map;
}

void print_metrics(const tvmf::MetricsReport& r) {
  for (std::size_t c = 0; c < r.per_class_dsc.size(); ++c) {
    std::printf("  class %zu  DSC %.4f  (%lld gt pixels)\n", c, r.per_class_dsc[c],
                static_cast<long long>(r.pixel_counts[c]));
  }
  std::printf("  mean DSC %.4f  foreground mean DSC %.4f\n", r.mean_dsc, r.foreground_mean_dsc);
}

void print_record(const tvmf::RunRecord& r) {
  std::printf("loss %s", r.loss_name.c_str());
  if (r.kappa) std::printf("  kappa %g", *r.kappa);
  if (r.lambda) std::printf("  lambda %g", *r.lambda);
  std::printf("  seed %llu  digest %s\n", static_cast<unsigned long long>(r.seed), r.data_order_digest.c_str());
  for (const auto& e : r.epochs) {
    std::printf("epoch %3d  loss %.5f  lr %.5f  val DSC", e.epoch, e.train_loss, e.lr);
    for (double d : e.val_dsc) std::printf(" %.3f", d);
    if (!e.kappas.empty()) {
      std::printf("  kappa");
      for (double k : e.kappas) std::printf(" %.2f", k);
    }
    std::printf("\n");
  }
  std::printf("test (best epoch %d):\n", r.best_epoch);
  print_metrics(r.test);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"t-vMF Dice loss experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  ConfigMap overrides;

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "generate a synthetic segmentation dataset");
  gen->add_option("--config", config_path, "structured-text config file");
  gen->add_option("--out", out_dir, "output directory");
  override_flag(gen, overrides, "--seed", "seed", "global seed");
  add_dataset_flags(gen, overrides);

  // train
  auto* train = app.add_subcommand("train", "train a model and write the run record");
  int folds = 1;
  train->add_option("--config", config_path, "structured-text config file");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--folds", folds, "repeat with k re-seeded splits")->check(CLI::PositiveNumber);
  override_flag(train, overrides, "--loss", "loss.name",
                "dice | normalized_dice | tvmf | generalized_dice | focal_tversky");
  override_flag(train, overrides, "--gamma", "loss.gamma", "smoothing constant");
  override_flag(train, overrides, "--kappa", "loss.kappa", "fixed t-vMF concentration");
  override_flag(train, overrides, "--lambda", "loss.lambda", "adaptive t-vMF cap");
  override_flag(train, overrides, "--alpha", "loss.alpha", "Tversky false-negative weight");
  override_flag(train, overrides, "--beta", "loss.beta", "Tversky false-positive weight");
  override_flag(train, overrides, "--focal-gamma", "loss.focal_gamma", "focal Tversky exponent 1/focal_gamma");
  override_flag(train, overrides, "--hidden-width", "model.hidden_width", "hidden channels");
  override_flag(train, overrides, "--kernel-size", "model.kernel_size", "odd kernel size");
  override_flag(train, overrides, "--lr0", "optimizer.lr0", "initial learning rate");
  override_flag(train, overrides, "--momentum", "optimizer.momentum", "SGD momentum");
  override_flag(train, overrides, "--weight-decay", "optimizer.weight_decay", "L2 weight decay");
  override_flag(train, overrides, "--epochs", "epochs", "training epochs");
  override_flag(train, overrides, "--batch-size", "batch_size", "batch size");
  override_flag(train, overrides, "--augment", "augment", "flip/rotate augmentation (true/false)");
  override_flag(train, overrides, "--seed", "seed", "global seed");
  override_flag(train, overrides, "--data", "data.path", "dataset file (otherwise generated)");
  add_dataset_flags(train, overrides);
  add_split_flags(train, overrides);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a dataset split");
  std::string checkpoint, data_path, split_name = "test";
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_path, "dataset file")->required();
  eval->add_option("--split", split_name, "train | val | test | all");
  eval->add_option("--config", config_path, "structured-text config file");
  eval->add_option("--out", out_dir, "output directory");
  override_flag(eval, overrides, "--seed", "seed", "global seed (split seed default)");
  override_flag(eval, overrides, "--eval-gamma", "eval_gamma", "DSC smoothing constant");
  add_split_flags(eval, overrides);

  // curves
  auto* curves = app.add_subcommand("curves", "tabulate t-vMF similarity against cosine");
  std::vector<double> kappas = {0, 2, 32, 128};
  int points = 101;
  curves->add_option("--kappa", kappas, "concentrations (repeatable)")->delimiter(',');
  curves->add_option("--points", points, "samples over cos theta in [0, 1]");
  curves->add_option("--out", out_dir, "output directory");

  // report
  auto* report = app.add_subcommand("report", "re-emit and print a run record");
  std::string run_path;
  report->add_option("--run", run_path, "summary.json of a finished run")->required();
  report->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const std::filesystem::path out(out_dir);
    if (*gen) {
      const tvmf::ExperimentConfig cfg = tvmf::config_from_map(merged(config_path, overrides));
      tvmf::ensure_directory(out);
      const tvmf::Dataset ds = tvmf::generate_dataset(cfg.dataset);
      tvmf::save_dataset(out / "dataset.tvmfd", ds);
      std::printf("wrote %zu samples to %s\n", ds.samples.size(), (out / "dataset.tvmfd").c_str());
    } else if (*train) {
      ConfigMap map = merged(config_path, overrides);
      const tvmf::ExperimentConfig base = tvmf::config_from_map(map);
      for (int fold = 0; fold < folds; ++fold) {
        tvmf::ExperimentConfig cfg = base;
        cfg.out_dir = folds == 1 ? out : out / ("fold_" + std::to_string(fold));
        if (folds > 1) cfg.split_seed = base.effective_split_seed() + static_cast<std::uint64_t>(fold);
        print_record(tvmf::run_training(cfg));
      }
    } else if (*eval) {
      const tvmf::ExperimentConfig cfg = tvmf::config_from_map(merged(config_path, overrides));
      const auto split = tvmf::parse_split_name(split_name);
      const auto r = tvmf::evaluate(checkpoint, data_path, split, cfg.split, cfg.effective_split_seed(),
                                    cfg.eval_gamma);
      tvmf::ensure_directory(out);
      tvmf::write_text_file(out / ("metrics_" + split_name + ".json"), tvmf::metrics_report_text(r));
      print_metrics(r);
    } else if (*curves) {
      tvmf::ensure_directory(out);
      tvmf::emit_similarity_curves(kappas, points, out / "similarity_curves.csv");
      std::printf("wrote %s\n", (out / "similarity_curves.csv").c_str());
    } else if (*report) {
      const tvmf::RunRecord r = tvmf::parse_report_summary(tvmf::read_text_file(run_path));
      tvmf::write_report(r, out);
      print_record(r);
    }
  } catch (const tvmf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return tvmf::exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
