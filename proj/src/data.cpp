#include "tvmf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "tvmf/errors.hpp"

namespace tvmf {

namespace {

constexpr const char* kDatasetMagic = "TVMFD1";
constexpr double kLargestAreaFraction = 0.12;
constexpr int kPlacementAttempts = 200;
constexpr int kSampleRestarts = 50;

enum class ShapeFamily { Disk, Rectangle, Ring, Diamond };

struct Shape {
  ShapeFamily family;
  double cx, cy;
  double half_w, half_h;  // bounding-box half extents
  double radius;          // disk, ring outer, diamond

  bool contains(double px, double py) const {
    const double dx = px - cx;
    const double dy = py - cy;
    switch (family) {
      case ShapeFamily::Disk:
        return dx * dx + dy * dy <= radius * radius;
      case ShapeFamily::Rectangle:
        return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
      case ShapeFamily::Ring: {
        const double d2 = dx * dx + dy * dy;
        return d2 <= radius * radius && d2 >= 0.25 * radius * radius;
      }
      case ShapeFamily::Diamond:
        return std::abs(dx) + std::abs(dy) <= radius;
    }
    return false;
  }
};

Shape sized_shape(int class_index, double area, std::mt19937_64& rng) {
  Shape s{};
  s.family = static_cast<ShapeFamily>((class_index - 1) % 4);
  switch (s.family) {
    case ShapeFamily::Disk:
      s.radius = std::sqrt(area / std::numbers::pi);
      s.half_w = s.half_h = s.radius;
      break;
    case ShapeFamily::Rectangle: {
      const double aspect = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
      const double w = std::sqrt(area * aspect);
      s.half_w = 0.5 * w;
      s.half_h = 0.5 * area / w;
      break;
    }
    case ShapeFamily::Ring:
      s.radius = std::sqrt(area / (0.75 * std::numbers::pi));
      s.half_w = s.half_h = s.radius;
      break;
    case ShapeFamily::Diamond:
      s.radius = std::sqrt(area / 2.0);
      s.half_w = s.half_h = s.radius;
      break;
  }
  return s;
}

bool boxes_overlap(const Shape& a, const Shape& b) {
  constexpr double gap = 1.0;
  return std::abs(a.cx - b.cx) < a.half_w + b.half_w + gap &&
         std::abs(a.cy - b.cy) < a.half_h + b.half_h + gap;
}

// Tries to place one shape per foreground class; false if some shape found no room.
bool place_shapes(const DatasetSpec& spec, std::mt19937_64& rng, std::vector<Shape>& shapes) {
  shapes.clear();
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 1; k < spec.num_classes; ++k) {
    Shape s = sized_shape(k, expected_class_area(spec, k) * jitter(rng), rng);
    const double span_x = spec.width - 2.0 * s.half_w - 2.0;
    const double span_y = spec.height - 2.0 * s.half_h - 2.0;
    if (span_x < 0.0 || span_y < 0.0) return false;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      s.cx = 1.0 + s.half_w + span_x * unit(rng);
      s.cy = 1.0 + s.half_h + span_y * unit(rng);
      placed = std::none_of(shapes.begin(), shapes.end(),
                            [&](const Shape& other) { return boxes_overlap(s, other); });
    }
    if (!placed) return false;
    shapes.push_back(s);
  }
  return true;
}

Sample generate_sample(const DatasetSpec& spec, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);

  Sample sample;
  sample.height = spec.height;
  sample.width = spec.width;
  const std::size_t pixels = static_cast<std::size_t>(spec.height) * spec.width;

  std::vector<Shape> shapes;
  for (int restart = 0;; ++restart) {
    if (restart == kSampleRestarts) {
      throw ConfigError("cannot fit " + std::to_string(spec.num_classes - 1) + " shapes into " +
                        std::to_string(spec.height) + "x" + std::to_string(spec.width));
    }
    if (!place_shapes(spec, rng, shapes)) continue;
    sample.label.assign(pixels, 0);
    std::vector<int> area(static_cast<std::size_t>(spec.num_classes), 0);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        for (std::size_t k = 0; k < shapes.size(); ++k) {
          if (shapes[k].contains(x + 0.5, y + 0.5)) {
            sample.label[static_cast<std::size_t>(y) * spec.width + x] = static_cast<std::uint8_t>(k + 1);
            ++area[k + 1];
            break;
          }
        }
      }
    }
    if (std::all_of(area.begin() + 1, area.end(), [](int a) { return a > 0; })) break;
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  sample.image.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    const double base = (sample.label[i] + 0.5) / spec.num_classes;
    const double v = spec.noise_sigma > 0.0 ? base + spec.noise_sigma * noise(rng) : base;
    sample.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return sample;
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_samples < 0) throw ConfigError("num_samples must be >= 0");
  if (height < 1 || width < 1) throw ConfigError("image size must be positive");
  if (num_classes < 3 || num_classes > 256) throw ConfigError("num_classes must be in [3, 256]");
  if (!(imbalance_ratio >= 1.0)) throw ConfigError("imbalance_ratio must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

double expected_class_area(const DatasetSpec& spec, int class_index) {
  if (class_index < 1 || class_index >= spec.num_classes) {
    throw ConfigError("foreground class index out of range");
  }
  const double largest = kLargestAreaFraction * spec.height * spec.width;
  const int foreground = spec.num_classes - 1;
  const double t = foreground > 1 ? static_cast<double>(class_index - 1) / (foreground - 1) : 0.0;
  return largest * std::pow(spec.imbalance_ratio, -t);
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.num_classes = spec.num_classes;
  ds.samples.reserve(static_cast<std::size_t>(spec.num_samples));
  for (int i = 0; i < spec.num_samples; ++i) ds.samples.push_back(generate_sample(spec, static_cast<std::size_t>(i)));
  return ds;
}

Eigen::MatrixXd one_hot_encode(std::span<const std::uint8_t> label, int num_classes) {
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(num_classes, static_cast<Eigen::Index>(label.size()));
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] >= num_classes) {
      throw DataError("label " + std::to_string(label[i]) + " at pixel " + std::to_string(i) +
                      " exceeds class count " + std::to_string(num_classes));
    }
    onehot(label[i], static_cast<Eigen::Index>(i)) = 1.0;
  }
  return onehot;
}

ImagePlanes to_planes(const Sample& sample) {
  ImagePlanes planes(1, static_cast<Eigen::Index>(sample.image.size()));
  for (std::size_t i = 0; i < sample.image.size(); ++i) planes(0, static_cast<Eigen::Index>(i)) = sample.image[i];
  return planes;
}

Sample apply_augmentation(const Sample& sample, const AugmentParams& params) {
  const int h = sample.height;
  const int w = sample.width;
  Sample flipped = sample;
  if (params.flip) {
    for (int y = 0; y < h; ++y) {
      const std::size_t row = static_cast<std::size_t>(y) * w;
      std::reverse(flipped.image.begin() + row, flipped.image.begin() + row + w);
      std::reverse(flipped.label.begin() + row, flipped.label.begin() + row + w);
    }
  }
  if (params.angle_degrees == 0.0) return flipped;

  const double theta = params.angle_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);

  auto pixel = [&](int x, int y) -> double {
    if (x < 0 || x >= w || y < 0 || y >= h) return 0.0;
    return flipped.image[static_cast<std::size_t>(y) * w + x];
  };

  Sample out = flipped;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = cx + c * (x - cx) + s * (y - cy);
      const double sy = cy - s * (x - cx) + c * (y - cy);
      const std::size_t at = static_cast<std::size_t>(y) * w + x;

      const int nx = static_cast<int>(std::lround(sx));
      const int ny = static_cast<int>(std::lround(sy));
      out.label[at] = (nx >= 0 && nx < w && ny >= 0 && ny < h) ? flipped.label[static_cast<std::size_t>(ny) * w + nx] : 0;

      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * pixel(x0, y0) + fx * pixel(x0 + 1, y0)) +
                       fy * ((1 - fx) * pixel(x0, y0 + 1) + fx * pixel(x0 + 1, y0 + 1));
      out.image[at] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

AugmentParams draw_augmentation(std::mt19937_64& rng) {
  AugmentParams p;
  p.flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5;
  p.angle_degrees = std::uniform_real_distribution<double>(-90.0, 90.0)(rng);
  return p;
}

Sample augment(const Sample& sample, std::mt19937_64& rng) {
  return apply_augmentation(sample, draw_augmentation(rng));
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset for writing: " + path.string());
  out << kDatasetMagic << '\n'
      << dataset.samples.size() << ' ' << dataset.height << ' ' << dataset.width << ' '
      << dataset.num_classes << '\n';
  const std::size_t pixels = static_cast<std::size_t>(dataset.height) * dataset.width;
  for (const Sample& s : dataset.samples) {
    if (s.image.size() != pixels || s.label.size() != pixels) {
      throw DimensionError("sample shape differs from dataset header");
    }
    for (float v : s.image) detail::write_f32(out, v);
    out.write(reinterpret_cast<const char*>(s.label.data()), static_cast<std::streamsize>(pixels));
  }
  if (!out) throw IoError("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::size_t offset = 0;
  if (detail::read_line(in, offset, 16, "dataset magic") != kDatasetMagic) {
    throw FormatError("bad dataset magic in " + path.string(), 0);
  }
  const std::size_t header_at = offset;
  std::istringstream header(detail::read_line(in, offset, 256, "dataset header"));
  long long count = -1;
  Dataset ds;
  std::string extra;
  if (!(header >> count >> ds.height >> ds.width >> ds.num_classes) || (header >> extra) || count < 0 ||
      ds.height < 1 || ds.width < 1 || ds.num_classes < 1 || ds.num_classes > 256) {
    throw FormatError("malformed dataset header", header_at);
  }
  const std::size_t pixels = static_cast<std::size_t>(ds.height) * ds.width;
  ds.samples.reserve(static_cast<std::size_t>(std::min<long long>(count, 1 << 16)));
  for (long long i = 0; i < count; ++i) {
    Sample s;
    s.height = ds.height;
    s.width = ds.width;
    s.image.resize(pixels);
    for (float& v : s.image) v = detail::read_f32(in, offset, "image payload");
    s.label.resize(pixels);
    in.read(reinterpret_cast<char*>(s.label.data()), static_cast<std::streamsize>(pixels));
    if (in.gcount() != static_cast<std::streamsize>(pixels)) {
      throw FormatError("truncated label payload", offset + static_cast<std::size_t>(in.gcount()));
    }
    for (std::size_t p = 0; p < pixels; ++p) {
      if (s.label[p] >= ds.num_classes) throw FormatError("label out of range", offset + p);
    }
    offset += pixels;
    ds.samples.push_back(std::move(s));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in dataset", offset);
  return ds;
}

}  // namespace tvmf
