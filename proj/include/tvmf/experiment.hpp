#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tvmf/data.hpp"
#include "tvmf/losses.hpp"
#include "tvmf/metrics.hpp"
#include "tvmf/model.hpp"

namespace tvmf {

struct LossConfig {
  /// dice | normalized_dice | tvmf | generalized_dice | focal_tversky
  std::string name = "dice";
  double gamma = 1.0;
  std::optional<double> kappa;   // tvmf with one fixed concentration
  std::optional<double> lambda;  // tvmf with the adaptive per-class schedule
  TverskyParams tversky;

  bool is_tvmf() const { return name == "tvmf"; }
  bool is_adaptive() const { return is_tvmf() && lambda.has_value(); }
  void validate() const;
};

/// Dispatches to the named loss; kappas is only read by tvmf.
LossResult<double> evaluate_loss(const LossConfig& loss, const Eigen::Ref<const Eigen::MatrixXd>& pred,
                                 const Eigen::Ref<const Eigen::MatrixXd>& target,
                                 const std::vector<double>& kappas);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded permutation of [0, n) cut into train/val/test by rounded fractions.
SplitIndices split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t split_seed);

struct ExperimentConfig {
  LossConfig loss;
  ModelSpec model;
  DatasetSpec dataset;
  std::optional<std::filesystem::path> dataset_path;
  SplitFractions split;
  std::optional<std::uint64_t> split_seed;  // defaults to seed
  int epochs = 30;
  int batch_size = 8;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  bool augment = true;
  double eval_gamma = 1.0;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out_dir;

  void validate() const;
  std::uint64_t effective_split_seed() const { return split_seed.value_or(seed); }
};

/// Flat "section.key" -> value view of a config; top-level keys have no section.
using ConfigMap = std::map<std::string, std::string>;

/// Reads "key = value" lines grouped under [section] headers.
ConfigMap load_config_file(const std::filesystem::path& path);
ConfigMap parse_config_text(const std::string& text);
ExperimentConfig config_from_map(const ConfigMap& map);

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  std::vector<double> val_dsc;
  std::vector<double> kappas;  // in force during this epoch; empty for losses without kappa

  bool operator==(const EpochRow&) const = default;
};

struct RunRecord {
  std::string loss_name;
  std::optional<double> kappa;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  int num_classes = 0;
  std::string data_order_digest;
  int best_epoch = 0;
  std::vector<EpochRow> epochs;
  MetricsReport test;

  bool operator==(const RunRecord&) const = default;
};

/// Train, validate and update kappa once per epoch, then score the
/// best-validation checkpoint on the test split. Writes the checkpoint and
/// reports under out_dir when one is set.
RunRecord run_training(const ExperimentConfig& config);
RunRecord run_training(const ExperimentConfig& config, const Dataset& dataset);

enum class SplitName { Train, Val, Test, All };
SplitName parse_split_name(const std::string& name);

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset,
                       std::span<const std::size_t> indices, double gamma = 1.0);
MetricsReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                       SplitName split, const SplitFractions& fractions, std::uint64_t split_seed,
                       double gamma = 1.0);

struct SimilarityCurves {
  std::vector<double> kappas;
  std::vector<double> cos_theta;
  std::vector<std::vector<double>> values;  // values[k][i] = phi(cos_theta[i]; kappas[k])
};

SimilarityCurves similarity_curves(const std::vector<double>& kappas, int num_points);
/// Writes the curves as CSV: cos_theta followed by one column per kappa.
SimilarityCurves emit_similarity_curves(const std::vector<double>& kappas, int num_points,
                                        const std::filesystem::path& path);
SimilarityCurves parse_similarity_curves(const std::string& csv);

std::string report_summary_text(const RunRecord& record);
std::string report_table_csv(const RunRecord& record);
RunRecord parse_report_summary(const std::string& text);
std::string metrics_report_text(const MetricsReport& report);
MetricsReport parse_metrics_report(const std::string& text);

/// Writes summary.json and epochs.csv into dir.
void write_report(const RunRecord& record, const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
/// create_directories that reports failures as IoError.
void ensure_directory(const std::filesystem::path& dir);

}  // namespace tvmf
