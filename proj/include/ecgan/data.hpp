#pragma once

#include "ecgan/autodiff.hpp"
#include "ecgan/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ecgan {

/// Class-conditional Gaussian mixture with exactly known density.
struct OracleMixture {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  Vector priors;

  void validate() const;
  int num_classes() const { return static_cast<int>(means.size()); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }

  /// Component log-density log N(x; μ_y, Σ_y).
  double log_density(int y, const Vector& x) const;

  /// Exact first and second moments of the marginal p(x).
  Vector marginal_mean() const;
  Matrix marginal_covariance() const;

  /// K class means evenly spaced on a circle, isotropic covariance, uniform priors.
  static OracleMixture ring(int k = 8, double radius = 5.0, double variance = 0.25);
};

/// Samples stored one per row. Labels are zero-based class indices.
struct LabeledDataset {
  Matrix x;
  std::vector<int> y;
  int num_classes = 0;
  ImageShape shape{1, 1, 1};

  Eigen::Index size() const { return x.rows(); }
  bool is_image() const { return shape.height > 1 || shape.width > 1; }
  std::vector<double> label_marginal() const;
  std::vector<int> class_counts() const;
};

/// y ~ priors, x ~ N(μ_y, Σ_y); deterministic per seed.
LabeledDataset sample_mixture(const OracleMixture& mix, int n, std::uint64_t seed);

/// Exact p(y | x) under the mixture.
Vector bayes_posterior(const OracleMixture& mix, const Vector& x);

struct ImageDatasetSpec {
  std::optional<ImageShape> shape;  // enforce a shape when set
  int max_per_class = 0;            // 0 keeps every image
};

/// Loads either a directory of per-class subfolders (PNG, PGM, PPM) or a
/// binary record file; pixels are mapped from [0, 255] to [−1, 1].
LabeledDataset load_image_dataset(const std::filesystem::path& path, const ImageDatasetSpec& spec = {});

/// Raw 8-bit images in CHW order, one image per entry.
struct RawImages {
  ImageShape shape;
  int num_classes = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::vector<std::uint8_t>> pixels;
};

/// Binary record layout (little-endian): five uint32 header fields
/// {K, count, H, W, C}, then `count` records of one label byte (zero-based)
/// followed by H·W·C pixel bytes in CHW order.
void write_record_file(const std::filesystem::path& path, const RawImages& images);
RawImages read_record_file(const std::filesystem::path& path);

/// Inverse of the [0, 255] → [−1, 1] normalization, rounded to the nearest byte.
std::uint8_t to_byte(double normalized);

}  // namespace ecgan
