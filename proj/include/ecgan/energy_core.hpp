#pragma once

#include "ecgan/common.hpp"

#include <span>
#include <vector>

namespace ecgan {

/// Final K-output linear layer of the energy discriminator: f(x) = Wᵀ g(x) + b.
/// Column y of `weight` together with `bias[y]` scores class y.
struct EnergyHeadParams {
  Matrix weight;  // feature_dim × K
  Vector bias;    // K

  EnergyHeadParams(Matrix w, Vector b);

  Eigen::Index feature_dim() const { return weight.rows(); }
  Eigen::Index num_classes() const { return weight.cols(); }
};

/// Per-class energies for one sample.
using EnergyLogits = Vector;

/// Single-output projection discriminator head: (w_u + w_y)ᵀ g + b_u.
struct ProjectionParams {
  Vector w_u;
  double b_u = 0.0;
  std::vector<Vector> class_embeddings;

  ProjectionParams(Vector wu, double bu, std::vector<Vector> embeddings);

  Eigen::Index feature_dim() const { return w_u.size(); }
  Eigen::Index num_classes() const { return static_cast<Eigen::Index>(class_embeddings.size()); }
};

EnergyLogits energy_scores(const EnergyHeadParams& head, const Vector& features);

/// Numerically stable log Σ exp(logits).
double aggregate_energy(std::span<const double> logits);
inline double aggregate_energy(const Vector& logits) {
  return aggregate_energy(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

Vector class_posterior(const EnergyLogits& logits);

/// log softmax(logits)[label], computed without exponentiating the posterior.
double log_posterior(const EnergyLogits& logits, int label);

/// Energy head that reproduces a projection discriminator: column y = w_u + w_y,
/// every bias tied to b_u.
EnergyHeadParams from_projection(const ProjectionParams& proj);

/// Output of the projection discriminator for one sample.
double projection_output(const ProjectionParams& proj, const Vector& features, int label);

}  // namespace ecgan
