#pragma once

#include "ecgan/entropy_oracle.hpp"
#include "ecgan/networks.hpp"

#include <string>
#include <vector>

namespace ecgan {

/// Outcome of one oracle suite.
struct SuiteResult {
  std::string name;
  int passed = 0;
  int total = 0;
  double max_error = 0.0;  // suite-specific worst deviation
  std::string metric = "max error";
  std::vector<std::string> failures;

  bool ok() const { return total > 0 && passed == total; }
  std::string summary() const;
};

/// Random finite instances: Gibbs q closes the gap, the gap equals
/// KL(q ‖ Gibbs) for random q, and E_q f + H(q) never exceeds log Z.
SuiteResult verify_duality(std::uint64_t seed, int instances = 100, int distributions = 1000);

/// One entropy-bound configuration used by the suite.
struct EntropyBoundCase {
  std::string label;
  DiscreteJoint joint;
  EmbeddingCritic critic;
  int batch_size = 2;
};

/// Identity, independent and random joints with aligned or moderate random
/// critics, for each M in {2, 8, 32}.
std::vector<EntropyBoundCase> entropy_bound_cases(std::uint64_t seed);

/// Every case is checked with `trials_per_case` trials; passes when no trial
/// flags a violation.
SuiteResult verify_entropy_bound(std::uint64_t seed, int trials_per_case = 6,
                                 std::vector<EntropyBoundReport>* reports = nullptr);

/// Smallest network with every ECGAN term active. Stays under 200 parameters.
NetConfig gradient_check_net();

/// |a − n| / max(|a|, |n|, floor), the relative-error measure for gradient checks.
double gradient_relative_error(double analytic, double numeric, double floor = 1e-6);

/// Composite L_D (over θ) and L_G (over φ) against central differences.
/// max_error is the largest relative error over every parameter entry.
SuiteResult verify_gradients(std::uint64_t seed, double tolerance = 1e-5);

/// from_projection reproduces the projection head on random triples and an
/// untied bias perturbation moves the energy head outside that family.
SuiteResult verify_equivalence(std::uint64_t seed, int triples = 100);

}  // namespace ecgan
