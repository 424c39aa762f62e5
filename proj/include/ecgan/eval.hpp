#pragma once

#include "ecgan/autodiff.hpp"
#include "ecgan/common.hpp"
#include "ecgan/data.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ecgan {

class Generator;

/// One evaluation snapshot. Serialized as a single JSON object per line.
struct MetricsRecord {
  std::int64_t step = 0;
  double frechet = 0.0;
  double intra_frechet = 0.0;
  double condition_accuracy = 0.0;
  double classifier_entropy_score = 1.0;
  std::string preset;
  std::uint64_t seed = 0;

  std::string to_json_line() const;
  static MetricsRecord from_json_line(const std::string& line);
};

struct Moments {
  Vector mean;
  Matrix covariance;
};

/// Sample mean and unbiased (n − 1) covariance of the rows of `x`.
Moments empirical_moments(const Matrix& x);

/// ‖μ1 − μ2‖² + Tr(Σ1 + Σ2 − 2(Σ1Σ2)^{1/2}). Exactly symmetric in its arguments.
double frechet_distance(const Vector& mu1, const Matrix& cov1, const Vector& mu2, const Matrix& cov2);
inline double frechet_distance(const Moments& a, const Moments& b) {
  return frechet_distance(a.mean, a.covariance, b.mean, b.covariance);
}

struct IntraFrechetResult {
  double value = 0.0;                // mean over the classes that were evaluated
  std::vector<double> per_class;     // NaN for missing classes
  std::vector<int> missing_classes;  // fewer than dim + 1 samples on either side

  bool complete() const { return missing_classes.empty(); }
};

/// Reference given as exact per-class moments.
IntraFrechetResult intra_frechet(const Matrix& samples, const std::vector<int>& labels, int num_classes,
                                 const std::vector<Moments>& reference);
/// Reference given as labeled samples.
IntraFrechetResult intra_frechet(const Matrix& samples, const std::vector<int>& labels, int num_classes,
                                 const Matrix& reference, const std::vector<int>& reference_labels);

/// Per-component moments of a mixture.
std::vector<Moments> class_moments(const OracleMixture& mix);

using PosteriorFn = std::function<Vector(const Vector&)>;

/// Fraction of rows whose posterior argmax equals the conditioning label.
double condition_accuracy(const Matrix& samples, const std::vector<int>& labels, const PosteriorFn& oracle);

/// exp(E_x KL(p(y|x) ‖ E_x p(y|x))) over rows of a posterior table.
double classifier_entropy_score(const Matrix& posteriors);

/// Evaluates each row of `samples` under the oracle.
Matrix posterior_table(const Matrix& samples, const PosteriorFn& oracle);

/// Fraction of rows whose posterior argmax is each class.
std::vector<double> predicted_class_fractions(const Matrix& posteriors);

/// Frozen, seeded random convolutional embedder used as the feature map for
/// image data. Its features are only self-consistent; they are not
/// comparable with Inception-based scores.
class RandomConvEmbedder {
 public:
  RandomConvEmbedder(const ImageShape& shape, int feature_dim, std::uint64_t seed);
  Matrix embed(const Matrix& images) const;
  int feature_dim() const { return feature_dim_; }

 private:
  Conv2dGeometry g0_, g1_;
  Matrix k0_, b0_, k1_, b1_, proj_;
  int feature_dim_;
};

/// Fits one Gaussian per class (with diagonal shrinkage) to labeled features;
/// used as the oracle classifier when the data distribution is not known.
OracleMixture fit_class_gaussians(const Matrix& features, const std::vector<int>& labels, int num_classes,
                                  double shrinkage = 1e-3);

/// Everything needed to score a generator.
struct EvalContext {
  int num_classes = 0;
  int samples_per_class = 500;
  std::function<Matrix(const Matrix&)> features;  // identity when empty
  OracleMixture oracle;                           // posterior oracle in feature space
  Moments reference;                              // marginal reference moments in feature space
  std::vector<Moments> reference_per_class;

  static EvalContext for_mixture(const OracleMixture& mix, int samples_per_class);
  static EvalContext for_images(const LabeledDataset& real, int samples_per_class, std::uint64_t seed,
                                int feature_dim = 16);
};

struct EvalOutcome {
  MetricsRecord record;
  Matrix samples;  // raw generator outputs
  std::vector<int> labels;
  std::vector<double> predicted_fractions;
  std::vector<int> missing_classes;
};

/// Generates a class-balanced batch from `generator` and computes every metric.
EvalOutcome evaluate_generator(const Generator& generator, const EvalContext& ctx, std::uint64_t seed);

}  // namespace ecgan
