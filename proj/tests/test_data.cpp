#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "tvmf/data.hpp"
#include "tvmf/errors.hpp"

using namespace tvmf;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.num_samples = 6;
  s.height = 32;
  s.width = 32;
  s.num_classes = 4;
  s.imbalance_ratio = 8;
  s.noise_sigma = 0.1;
  s.seed = 3;
  return s;
}

std::vector<int> class_counts(const Sample& s, int classes) {
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (auto l : s.label) ++counts[l];
  return counts;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tvmf_data_" + name);
}

}  // namespace

TEST_CASE("generation is deterministic and well formed") {
  const auto spec = small_spec();
  const auto a = generate_dataset(spec);
  CHECK(a == generate_dataset(spec));
  CHECK(a.samples.size() == 6);
  for (const auto& s : a.samples) {
    CHECK(s.image.size() == 32 * 32);
    CHECK(s.label.size() == 32 * 32);
    for (float v : s.image) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (int count : class_counts(s, 4)) CHECK(count > 0);
  }
  auto other = spec;
  other.seed = 4;
  CHECK_FALSE(generate_dataset(other) == a);
}

TEST_CASE("noiseless images carry one intensity per class") {
  auto spec = small_spec();
  spec.num_classes = 3;
  spec.noise_sigma = 0.0;
  for (const auto& s : generate_dataset(spec).samples) {
    const std::set<float> levels(s.image.begin(), s.image.end());
    CHECK(levels.size() == 3);
  }
}

TEST_CASE("foreground areas follow the imbalance ratio") {
  DatasetSpec spec;
  spec.num_samples = 200;
  spec.height = 64;
  spec.width = 64;
  spec.num_classes = 4;
  spec.imbalance_ratio = 16;
  spec.seed = 1;
  double area1 = 0, area3 = 0;
  for (const auto& s : generate_dataset(spec).samples) {
    const auto counts = class_counts(s, 4);
    area1 += counts[1];
    area3 += counts[3];
  }
  const double ratio = area1 / area3;
  CAPTURE(ratio);
  CHECK(ratio >= 8.0);
  CHECK(ratio <= 32.0);
}

TEST_CASE("impossible layouts are configuration errors") {
  auto spec = small_spec();
  spec.height = 6;
  spec.width = 6;
  spec.num_classes = 8;
  CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
  spec = small_spec();
  spec.num_classes = 2;
  CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
  spec = small_spec();
  spec.imbalance_ratio = 0.5;
  CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
}

TEST_CASE("one-hot encoding") {
  const LabelMap zeros(5, 0);
  const auto z = one_hot_encode(zeros, 3);
  CHECK(z.row(0).isOnes());
  CHECK(z.row(1).isZero());
  CHECK(z.row(2).isZero());

  const LabelMap grid{0, 1, 1, 2};
  const auto g = one_hot_encode(grid, 3);
  CHECK(g.row(1) == Eigen::RowVector4d(0, 1, 1, 0));

  std::mt19937_64 rng(1);
  LabelMap random(50);
  for (auto& l : random) l = static_cast<std::uint8_t>(rng() % 5);
  const auto enc = one_hot_encode(random, 5);
  CHECK((enc.colwise().sum().array() == 1.0).all());
  CHECK(hard_masks(enc) == random);

  CHECK_THROWS_AS(one_hot_encode(LabelMap{0, 3}, 3), DataError);
}

TEST_CASE("augmentation") {
  const auto ds = generate_dataset(small_spec());
  const Sample& s = ds.samples[0];

  CHECK(apply_augmentation(s, {false, 0.0}) == s);

  const Sample once = apply_augmentation(s, {true, 0.0});
  CHECK_FALSE(once == s);
  CHECK(apply_augmentation(once, {true, 0.0}) == s);
  CHECK(class_counts(once, 4) == class_counts(s, 4));

  // 2x2 with the top-left pixel labelled: a +90 degree turn moves it to the top-right
  Sample corner;
  corner.height = 2;
  corner.width = 2;
  corner.image = {1.0f, 0.0f, 0.0f, 0.0f};
  corner.label = {1, 0, 0, 0};
  const Sample turned = apply_augmentation(corner, {false, 90.0});
  CHECK(turned.label == LabelMap{0, 1, 0, 0});
  CHECK(turned.image[1] == doctest::Approx(1.0f));

  std::mt19937_64 rng(9), rng2(9);
  for (int i = 0; i < 20; ++i) {
    const Sample a = augment(s, rng);
    CHECK(a == augment(s, rng2));
    for (float v : a.image) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (auto l : a.label) CHECK(l < 4);
  }

  std::mt19937_64 draws(1);
  int flips = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = draw_augmentation(draws);
    flips += p.flip;
    CHECK(p.angle_degrees >= -90.0);
    CHECK(p.angle_degrees <= 90.0);
  }
  CHECK(flips > 400);
  CHECK(flips < 600);
}

TEST_CASE("dataset files") {
  const auto ds = generate_dataset(small_spec());
  const auto path = temp_path("set.tvmfd");
  save_dataset(path, ds);
  CHECK(load_dataset(path) == ds);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const std::string header = "TVMFD1\n6 32 32 4\n";
  CHECK(bytes.rfind(header, 0) == 0);
  CHECK(bytes.size() == header.size() + 6 * 32 * 32 * 5);

  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write("TVMFX1" + bytes.substr(6));
  CHECK_THROWS_AS(load_dataset(path), FormatError);

  write(bytes.substr(0, bytes.size() - 10));
  try {
    load_dataset(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == bytes.size() - 10);
  }

  std::string bad_label = bytes;
  bad_label.back() = static_cast<char>(9);
  write(bad_label);
  CHECK_THROWS_AS(load_dataset(path), FormatError);

  Dataset empty;
  empty.height = 8;
  empty.width = 8;
  empty.num_classes = 3;
  save_dataset(path, empty);
  CHECK(load_dataset(path) == empty);
  std::filesystem::remove(path);
}
