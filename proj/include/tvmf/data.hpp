#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tvmf/metrics.hpp"
#include "tvmf/model.hpp"

namespace tvmf {

/// Single-channel image with its label map, both row-major.
struct Sample {
  int height = 0;
  int width = 0;
  std::vector<float> image;  // values in [0, 1]
  LabelMap label;            // class indices

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;
};

struct DatasetSpec {
  int num_samples = 200;
  int height = 64;
  int width = 64;
  int num_classes = 4;           // class 0 is background
  double imbalance_ratio = 16.0;  // largest / smallest expected foreground area
  double noise_sigma = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One non-overlapping shape per foreground class on a background field.
///
/// Class k (1-based) draws shape family (k - 1) mod 4: disk, rectangle, ring,
/// diamond. Expected areas fall geometrically from class 1 to class C - 1 so
/// their ratio is imbalance_ratio. Pixel intensity is (c + 0.5) / C plus
/// Gaussian noise, clamped to [0, 1]. Sample i depends only on (seed, i).
Dataset generate_dataset(const DatasetSpec& spec);

/// Expected pixel area of foreground class k under spec.
double expected_class_area(const DatasetSpec& spec, int class_index);

Eigen::MatrixXd one_hot_encode(std::span<const std::uint8_t> label, int num_classes);

/// One-channel model input for a sample.
ImagePlanes to_planes(const Sample& sample);

struct AugmentParams {
  bool flip = false;
  double angle_degrees = 0.0;
};

/// Horizontal flip (if requested), then rotation about the image centre.
/// Image resampled bilinearly, labels nearest-neighbour; pixels mapped from
/// outside the frame become background with intensity 0.
Sample apply_augmentation(const Sample& sample, const AugmentParams& params);

/// Flip with probability 0.5 and a rotation angle uniform in [-90, 90] degrees.
AugmentParams draw_augmentation(std::mt19937_64& rng);

Sample augment(const Sample& sample, std::mt19937_64& rng);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace tvmf
