#include "ecgan/eval.hpp"

#include "ecgan/networks.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>

namespace ecgan {

namespace {

using Dense = Eigen::MatrixXd;

void check_symmetric(const Matrix& c, const char* which) {
  require(c.rows() == c.cols(), std::string(which) + " covariance must be square");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InvalidInput(std::string(which) + " covariance is not symmetric");
  }
}

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [−1e−8·scale, 0) are clipped to zero; anything more negative is rejected.
Dense psd_sqrt(const Dense& m) {
  Eigen::SelfAdjointEigenSolver<Dense> es(0.5 * (m + m.transpose()));
  Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-8 * scale) throw InvalidInput("covariance is not positive semidefinite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt_product(const Dense& a, const Dense& b) {
  const Dense ra = psd_sqrt(a);
  Eigen::SelfAdjointEigenSolver<Dense> es(ra * b * ra, Eigen::EigenvaluesOnly);
  double t = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) t += std::sqrt(std::max(es.eigenvalues()[i], 0.0));
  return t;
}

Matrix rows_with_label(const Matrix& x, const std::vector<int>& labels, int y) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == y) idx.push_back(static_cast<Eigen::Index>(i));
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = x.row(idx[j]);
  return out;
}

}  // namespace

std::string MetricsRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["frechet"] = frechet;
  j["intra_frechet"] = intra_frechet;
  j["condition_accuracy"] = condition_accuracy;
  j["classifier_entropy_score"] = classifier_entropy_score;
  j["preset"] = preset;
  j["seed"] = seed;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.frechet = j.at("frechet").get<double>();
  r.intra_frechet = j.at("intra_frechet").get<double>();
  r.condition_accuracy = j.at("condition_accuracy").get<double>();
  r.classifier_entropy_score = j.at("classifier_entropy_score").get<double>();
  r.preset = j.at("preset").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

Moments empirical_moments(const Matrix& x) {
  require(x.rows() >= 2, "moment estimation needs at least two samples");
  Moments m;
  m.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  return m;
}

double frechet_distance(const Vector& mu1, const Matrix& cov1, const Vector& mu2, const Matrix& cov2) {
  require(mu1.size() == mu2.size() && cov1.rows() == mu1.size() && cov2.rows() == mu2.size(),
          "frechet_distance: dimension mismatch");
  check_symmetric(cov1, "first");
  check_symmetric(cov2, "second");
  const double mean_term = (mu1 - mu2).squaredNorm();
  const double trace_sum = cov1.trace() + cov2.trace();
  // Both orderings have the same spectrum; averaging them makes the result
  // bitwise symmetric under argument exchange.
  const double cross = 0.5 * (trace_sqrt_product(cov1, cov2) + trace_sqrt_product(cov2, cov1));
  return std::max(0.0, mean_term + (trace_sum - 2.0 * cross));
}

IntraFrechetResult intra_frechet(const Matrix& samples, const std::vector<int>& labels, int num_classes,
                                 const std::vector<Moments>& reference) {
  require(static_cast<Eigen::Index>(labels.size()) == samples.rows(), "one label per sample required");
  require(static_cast<int>(reference.size()) == num_classes, "reference moments needed for every class");
  IntraFrechetResult r;
  r.per_class.assign(static_cast<std::size_t>(num_classes), std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int used = 0;
  for (int y = 0; y < num_classes; ++y) {
    const Matrix xs = rows_with_label(samples, labels, y);
    if (xs.rows() < samples.cols() + 1 || xs.rows() < 2) {
      r.missing_classes.push_back(y);
      continue;
    }
    const double d = frechet_distance(empirical_moments(xs), reference[static_cast<std::size_t>(y)]);
    r.per_class[static_cast<std::size_t>(y)] = d;
    total += d;
    ++used;
  }
  r.value = used > 0 ? total / used : std::numeric_limits<double>::quiet_NaN();
  return r;
}

IntraFrechetResult intra_frechet(const Matrix& samples, const std::vector<int>& labels, int num_classes,
                                 const Matrix& reference, const std::vector<int>& reference_labels) {
  require(static_cast<Eigen::Index>(reference_labels.size()) == reference.rows(), "one label per reference row");
  std::vector<Moments> ref(static_cast<std::size_t>(num_classes));
  std::vector<int> ref_missing;
  for (int y = 0; y < num_classes; ++y) {
    const Matrix xs = rows_with_label(reference, reference_labels, y);
    if (xs.rows() < reference.cols() + 1 || xs.rows() < 2) {
      ref_missing.push_back(y);
      ref[static_cast<std::size_t>(y)] = {Vector::Zero(reference.cols()), Matrix::Zero(reference.cols(), reference.cols())};
    } else {
      ref[static_cast<std::size_t>(y)] = empirical_moments(xs);
    }
  }
  IntraFrechetResult r = intra_frechet(samples, labels, num_classes, ref);
  if (ref_missing.empty()) return r;
  // Recompute the mean without classes that are missing on the reference side.
  double total = 0.0;
  int used = 0;
  for (int y : ref_missing) {
    r.per_class[static_cast<std::size_t>(y)] = std::numeric_limits<double>::quiet_NaN();
    if (std::find(r.missing_classes.begin(), r.missing_classes.end(), y) == r.missing_classes.end())
      r.missing_classes.push_back(y);
  }
  std::sort(r.missing_classes.begin(), r.missing_classes.end());
  for (double d : r.per_class)
    if (!std::isnan(d)) total += d, ++used;
  r.value = used > 0 ? total / used : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<Moments> class_moments(const OracleMixture& mix) {
  std::vector<Moments> out;
  for (int y = 0; y < mix.num_classes(); ++y)
    out.push_back({mix.means[static_cast<std::size_t>(y)], mix.covariances[static_cast<std::size_t>(y)]});
  return out;
}

Matrix posterior_table(const Matrix& samples, const PosteriorFn& oracle) {
  require(samples.rows() >= 1, "no samples");
  Matrix out;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const Vector p = oracle(samples.row(i).transpose());
    if (i == 0) out.resize(samples.rows(), p.size());
    out.row(i) = p.transpose();
  }
  return out;
}

double condition_accuracy(const Matrix& samples, const std::vector<int>& labels, const PosteriorFn& oracle) {
  require(static_cast<Eigen::Index>(labels.size()) == samples.rows() && samples.rows() > 0,
          "one label per sample required");
  int hits = 0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    Eigen::Index best = 0;
    oracle(samples.row(i).transpose()).maxCoeff(&best);
    hits += static_cast<int>(best) == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(samples.rows());
}

double classifier_entropy_score(const Matrix& p) {
  require(p.rows() >= 2, "classifier_entropy_score needs at least two samples");
  require(p.cols() >= 1, "empty posterior rows");
  const RowVector marginal = p.colwise().mean();
  double kl_total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double v = p(i, k);
      if (v > 0.0) kl_total += v * (std::log(v) - std::log(marginal[k]));
    }
  }
  const double mean_kl = std::max(0.0, kl_total / static_cast<double>(p.rows()));
  return std::clamp(std::exp(mean_kl), 1.0, static_cast<double>(p.cols()));
}

std::vector<double> predicted_class_fractions(const Matrix& p) {
  std::vector<double> f(static_cast<std::size_t>(p.cols()), 0.0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    p.row(i).maxCoeff(&best);
    f[static_cast<std::size_t>(best)] += 1.0;
  }
  for (double& v : f) v /= static_cast<double>(p.rows());
  return f;
}

RandomConvEmbedder::RandomConvEmbedder(const ImageShape& shape, int feature_dim, std::uint64_t seed)
    : feature_dim_(feature_dim) {
  require(feature_dim >= 1, "embedder feature_dim must be positive");
  Rng rng(derive_seed(seed, {0xe3bed}));
  g0_ = Conv2dGeometry{shape, 8, 3, 2, 1};
  g1_ = Conv2dGeometry{g0_.out(), 16, 3, 2, 1};
  const int f0 = shape.channels * 9;
  const int f1 = 8 * 9;
  k0_ = randn(8, f0, rng, std::sqrt(2.0 / f0));
  b0_ = Matrix::Zero(1, 8);
  k1_ = randn(16, f1, rng, std::sqrt(2.0 / f1));
  b1_ = Matrix::Zero(1, 16);
  const int flat = g1_.out().flat();
  proj_ = randn(flat, feature_dim, rng, 1.0 / std::sqrt(static_cast<double>(flat)));
}

Matrix RandomConvEmbedder::embed(const Matrix& images) const {
  Graph g;
  auto x = g.constant(images);
  auto h = g.leaky_relu(g.conv2d(x, g.constant(k0_), g.constant(b0_), g0_), 0.2);
  h = g.leaky_relu(g.conv2d(h, g.constant(k1_), g.constant(b1_), g1_), 0.2);
  return g.value(g.matmul(h, g.constant(proj_)));
}

OracleMixture fit_class_gaussians(const Matrix& features, const std::vector<int>& labels, int num_classes,
                                  double shrinkage) {
  OracleMixture mix;
  const Eigen::Index d = features.cols();
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int y = 0; y < num_classes; ++y) {
    const Matrix xs = rows_with_label(features, labels, y);
    require(xs.rows() >= 2, "class " + std::to_string(y) + " needs at least two samples to fit");
    Moments m = empirical_moments(xs);
    const double ridge = shrinkage * std::max(1e-12, m.covariance.trace() / static_cast<double>(d));
    m.covariance += ridge * Matrix::Identity(d, d);
    mix.means.push_back(m.mean);
    mix.covariances.push_back(0.5 * (m.covariance + m.covariance.transpose()));
    counts[static_cast<std::size_t>(y)] = static_cast<double>(xs.rows());
  }
  mix.priors.resize(num_classes);
  double total = 0.0;
  for (double c : counts) total += c;
  for (int y = 0; y < num_classes; ++y) mix.priors[y] = counts[static_cast<std::size_t>(y)] / total;
  mix.priors /= mix.priors.sum();
  return mix;
}

EvalContext EvalContext::for_mixture(const OracleMixture& mix, int samples_per_class) {
  mix.validate();
  EvalContext ctx;
  ctx.num_classes = mix.num_classes();
  ctx.samples_per_class = samples_per_class;
  ctx.oracle = mix;
  ctx.reference = {mix.marginal_mean(), mix.marginal_covariance()};
  ctx.reference_per_class = class_moments(mix);
  return ctx;
}

EvalContext EvalContext::for_images(const LabeledDataset& real, int samples_per_class, std::uint64_t seed,
                                    int feature_dim) {
  EvalContext ctx;
  ctx.num_classes = real.num_classes;
  ctx.samples_per_class = samples_per_class;
  auto embedder = std::make_shared<RandomConvEmbedder>(real.shape, feature_dim, seed);
  ctx.features = [embedder](const Matrix& x) { return embedder->embed(x); };
  const Matrix f = ctx.features(real.x);
  ctx.oracle = fit_class_gaussians(f, real.y, real.num_classes);
  ctx.reference = empirical_moments(f);
  for (int y = 0; y < real.num_classes; ++y) ctx.reference_per_class.push_back(empirical_moments(rows_with_label(f, real.y, y)));
  return ctx;
}

EvalOutcome evaluate_generator(const Generator& generator, const EvalContext& ctx, std::uint64_t seed) {
  require(ctx.num_classes >= 2 && ctx.samples_per_class >= 1, "invalid evaluation context");
  const int n = ctx.num_classes * ctx.samples_per_class;
  Rng rng(seed);
  EvalOutcome out;
  out.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = i % ctx.num_classes;
  const Matrix z = randn(n, generator.config().noise_dim, rng);
  out.samples = generator.sample(z, out.labels);
  const Matrix feats = ctx.features ? ctx.features(out.samples) : out.samples;

  const OracleMixture& oracle = ctx.oracle;
  const PosteriorFn posterior = [&oracle](const Vector& x) { return bayes_posterior(oracle, x); };
  const Matrix post = posterior_table(feats, posterior);

  MetricsRecord& r = out.record;
  r.frechet = frechet_distance(empirical_moments(feats), ctx.reference);
  const IntraFrechetResult intra = intra_frechet(feats, out.labels, ctx.num_classes, ctx.reference_per_class);
  r.intra_frechet = intra.value;
  out.missing_classes = intra.missing_classes;
  int hits = 0;
  for (Eigen::Index i = 0; i < post.rows(); ++i) {
    Eigen::Index best = 0;
    post.row(i).maxCoeff(&best);
    hits += static_cast<int>(best) == out.labels[static_cast<std::size_t>(i)];
  }
  r.condition_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  r.classifier_entropy_score = classifier_entropy_score(post);
  out.predicted_fractions = predicted_class_fractions(post);
  return out;
}

}  // namespace ecgan
