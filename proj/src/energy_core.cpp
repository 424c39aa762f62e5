#include "ecgan/energy_core.hpp"

#include <algorithm>
#include <cmath>

namespace ecgan {

EnergyHeadParams::EnergyHeadParams(Matrix w, Vector b) : weight(std::move(w)), bias(std::move(b)) {
  require(weight.rows() >= 1, "energy head: feature_dim must be >= 1");
  require(weight.cols() >= 2, "energy head: K must be >= 2");
  require(bias.size() == weight.cols(), "energy head: bias length must equal K");
  require(weight.allFinite() && bias.allFinite(), "energy head: non-finite parameters");
}

ProjectionParams::ProjectionParams(Vector wu, double bu, std::vector<Vector> embeddings)
    : w_u(std::move(wu)), b_u(bu), class_embeddings(std::move(embeddings)) {
  require(w_u.size() >= 1, "projection head: feature_dim must be >= 1");
  require(std::isfinite(b_u) && w_u.allFinite(), "projection head: non-finite parameters");
  for (const auto& e : class_embeddings) {
    require(e.size() == w_u.size(), "projection head: class embedding length must equal feature_dim");
    require(e.allFinite(), "projection head: non-finite class embedding");
  }
}

EnergyLogits energy_scores(const EnergyHeadParams& head, const Vector& features) {
  if (features.size() != head.feature_dim()) {
    throw InvalidInput("energy_scores: feature length " + std::to_string(features.size()) +
                       " does not match head feature_dim " + std::to_string(head.feature_dim()));
  }
  return head.weight.transpose() * features + head.bias;
}

double aggregate_energy(std::span<const double> logits) {
  require(!logits.empty(), "aggregate_energy: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  require(std::isfinite(mx), "aggregate_energy: non-finite logits");
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  return mx + std::log(s);
}

Vector class_posterior(const EnergyLogits& logits) {
  require(logits.size() > 0, "class_posterior: empty logits");
  require(logits.allFinite(), "class_posterior: non-finite logits");
  const double mx = logits.maxCoeff();
  Vector p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

double log_posterior(const EnergyLogits& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw InvalidInput("label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(logits.size()) + ")");
  }
  return logits[label] - aggregate_energy(logits);
}

EnergyHeadParams from_projection(const ProjectionParams& proj) {
  const Eigen::Index d = proj.feature_dim();
  const Eigen::Index k = proj.num_classes();
  Matrix w(d, k);
  for (Eigen::Index y = 0; y < k; ++y) w.col(y) = proj.w_u + proj.class_embeddings[static_cast<std::size_t>(y)];
  return EnergyHeadParams(std::move(w), Vector::Constant(k, proj.b_u));
}

double projection_output(const ProjectionParams& proj, const Vector& features, int label) {
  require(features.size() == proj.feature_dim(), "projection_output: feature length mismatch");
  require(label >= 0 && label < proj.num_classes(), "projection_output: label out of range");
  return proj.w_u.dot(features) + proj.b_u + proj.class_embeddings[static_cast<std::size_t>(label)].dot(features);
}

}  // namespace ecgan
