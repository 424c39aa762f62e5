#pragma once

#include "ecgan/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ecgan {

/// Energies f over a finite domain of n points, optionally with an n × K
/// table of per-class energies.
struct PartitionInstance {
  Vector energies;
  std::optional<Matrix> class_energies;

  void validate() const;
  Eigen::Index size() const { return energies.size(); }
};

/// log Σ_x exp f(x).
double brute_force_log_partition(const PartitionInstance& inst);
/// log Σ_x exp f(x)[y] for one class column.
double brute_force_log_partition(const PartitionInstance& inst, int label);

/// softmax(energies).
Vector gibbs_distribution(const Vector& energies);

/// −Σ q log q with 0 log 0 = 0.
double shannon_entropy(const Vector& q);

/// log Z − (E_q[f] + H(q)). `q` must be a distribution over the domain.
double duality_gap(const Vector& q, const PartitionInstance& inst);

/// Joint probability table p(x, y), rows indexed by x.
struct DiscreteJoint {
  Matrix p;

  void validate() const;
  Vector marginal_x() const;
  Vector marginal_y() const;
  double entropy_x() const;
  double mutual_information() const;
};

/// Fixed embedding critic: row x of `l` is l(x), row y of `e` is e(y).
struct EmbeddingCritic {
  Matrix l;
  Matrix e;
  double temperature = 1.0;

  void validate(const DiscreteJoint& joint) const;
};

/// One batch of the contrastive estimator on M pairs: the mean over i of
///   log M + s_ii − log(exp s_ii + Σ_{j≠i} exp(l(x_i)ᵀl(x_j) / t)),
/// with s_ii = l(x_i)ᵀe(y_i) / t.
double contrastive_bound_estimate(const EmbeddingCritic& critic, const std::vector<int>& xs,
                                  const std::vector<int>& ys);

struct EntropyBoundReport {
  int batch_size = 0;               // M
  int batches_per_trial = 0;
  std::vector<double> trial_means;  // Monte Carlo mean estimate per trial
  std::vector<double> trial_std_errors;
  double entropy_x = 0.0;           // exact H(X)
  double mutual_information = 0.0;  // exact I(X;Y)
  int violations = 0;               // trials with mean > H(X) + 3·SE
  bool degenerate = false;          // |supp X| = 1

  double violation_rate() const {
    return trial_means.empty() ? 0.0 : static_cast<double>(violations) / static_cast<double>(trial_means.size());
  }
  std::string to_json_line() const;
};

/// Runs `trials` independent Monte Carlo estimates, each averaging
/// `batches_per_trial` batches of M pairs drawn from the joint.
EntropyBoundReport entropy_bound_check(const DiscreteJoint& joint, int batch_size, int trials,
                                       const EmbeddingCritic& critic, std::uint64_t seed,
                                       int batches_per_trial = 200);

}  // namespace ecgan
