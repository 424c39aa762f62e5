#include "ecgan/entropy_oracle.hpp"

#include "ecgan/energy_core.hpp"

#include <json.hpp>

#include <cmath>

namespace ecgan {

namespace {

void check_distribution(const Vector& q, Eigen::Index n, const char* what) {
  if (q.size() != n) {
    throw InvalidInput(std::string(what) + ": expected " + std::to_string(n) + " entries, got " +
                       std::to_string(q.size()));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!std::isfinite(q[i]) || q[i] < 0.0) {
      throw InvalidInput(std::string(what) + ": entry " + std::to_string(i) + " is negative or not finite");
    }
    total += q[i];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidInput(std::string(what) + ": entries sum to " + std::to_string(total) + ", not 1");
  }
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

void PartitionInstance::validate() const {
  require(energies.size() >= 1, "partition instance: empty domain");
  require(energies.allFinite(), "partition instance: energies must be finite");
  if (class_energies) {
    require(class_energies->rows() == energies.size(), "partition instance: class table must have one row per point");
    require(class_energies->cols() >= 1, "partition instance: class table has no columns");
    require(class_energies->allFinite(), "partition instance: class energies must be finite");
  }
}

double brute_force_log_partition(const PartitionInstance& inst) {
  inst.validate();
  // A single point has no classes to aggregate over, so handle it directly.
  if (inst.size() == 1) return inst.energies[0];
  return aggregate_energy(inst.energies);
}

double brute_force_log_partition(const PartitionInstance& inst, int label) {
  inst.validate();
  require(inst.class_energies.has_value(), "partition instance has no class table");
  require(label >= 0 && label < inst.class_energies->cols(), "label out of range");
  return log_sum_exp(inst.class_energies->col(label));
}

Vector gibbs_distribution(const Vector& energies) {
  require(energies.size() >= 1 && energies.allFinite(), "gibbs_distribution: need finite energies");
  const Vector shifted = (energies.array() - energies.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

double shannon_entropy(const Vector& q) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) h -= q[i] * std::log(q[i]);
  }
  return h;
}

double duality_gap(const Vector& q, const PartitionInstance& inst) {
  inst.validate();
  check_distribution(q, inst.size(), "duality_gap: q");
  return brute_force_log_partition(inst) - (q.dot(inst.energies) + shannon_entropy(q));
}

void DiscreteJoint::validate() const {
  require(p.rows() >= 1 && p.cols() >= 1, "joint table is empty");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    require(std::isfinite(v) && v >= 0.0, "joint table entries must be non-negative and finite");
    total += v;
  }
  require(std::abs(total - 1.0) <= 1e-12, "joint table must sum to 1 (got " + std::to_string(total) + ")");
}

Vector DiscreteJoint::marginal_x() const { return p.rowwise().sum(); }
Vector DiscreteJoint::marginal_y() const { return p.colwise().sum().transpose(); }

double DiscreteJoint::entropy_x() const { return shannon_entropy(marginal_x()); }

double DiscreteJoint::mutual_information() const {
  const Vector px = marginal_x();
  const Vector py = marginal_y();
  double mi = 0.0;
  for (Eigen::Index x = 0; x < p.rows(); ++x) {
    for (Eigen::Index y = 0; y < p.cols(); ++y) {
      if (p(x, y) > 0.0) mi += p(x, y) * std::log(p(x, y) / (px[x] * py[y]));
    }
  }
  return std::max(mi, 0.0);
}

void EmbeddingCritic::validate(const DiscreteJoint& joint) const {
  require(l.rows() == joint.p.rows(), "critic: l needs one row per x value");
  require(e.rows() == joint.p.cols(), "critic: e needs one row per y value");
  require(l.cols() == e.cols() && l.cols() >= 1, "critic: l and e must share a positive width");
  require(l.allFinite() && e.allFinite(), "critic: embeddings must be finite");
  require(temperature > 0.0, "critic: temperature must be positive");
}

double contrastive_bound_estimate(const EmbeddingCritic& c, const std::vector<int>& xs, const std::vector<int>& ys) {
  const std::size_t m = xs.size();
  require(m >= 2 && ys.size() == m, "contrastive estimate needs at least two aligned pairs");
  Vector row(static_cast<Eigen::Index>(m));
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double diag = c.l.row(xs[i]).dot(c.e.row(ys[i])) / c.temperature;
    for (std::size_t j = 0; j < m; ++j) {
      row[static_cast<Eigen::Index>(j)] = i == j ? diag : c.l.row(xs[i]).dot(c.l.row(xs[j])) / c.temperature;
    }
    total += diag - log_sum_exp(row);
  }
  return std::log(static_cast<double>(m)) + total / static_cast<double>(m);
}

EntropyBoundReport entropy_bound_check(const DiscreteJoint& joint, int batch_size, int trials,
                                       const EmbeddingCritic& critic, std::uint64_t seed, int batches_per_trial) {
  joint.validate();
  critic.validate(joint);
  require(batch_size >= 2, "entropy bound check needs M >= 2");
  require(trials >= 1 && batches_per_trial >= 2, "entropy bound check needs at least one trial of two batches");

  EntropyBoundReport rep;
  rep.batch_size = batch_size;
  rep.batches_per_trial = batches_per_trial;
  rep.entropy_x = joint.entropy_x();
  rep.mutual_information = joint.mutual_information();
  const Vector px = joint.marginal_x();
  rep.degenerate = (px.array() > 0.0).count() == 1;

  const Eigen::Index ny = joint.p.cols();
  std::vector<double> flat(joint.p.data(), joint.p.data() + joint.p.size());
  std::discrete_distribution<Eigen::Index> cell(flat.begin(), flat.end());
  std::vector<int> xs(static_cast<std::size_t>(batch_size)), ys(xs.size());
  std::vector<double> est(static_cast<std::size_t>(batches_per_trial));

  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    for (auto& v : est) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const Eigen::Index k = cell(rng);
        xs[i] = static_cast<int>(k / ny);
        ys[i] = static_cast<int>(k % ny);
      }
      v = contrastive_bound_estimate(critic, xs, ys);
    }
    double mean = 0.0;
    for (double v : est) mean += v;
    mean /= static_cast<double>(est.size());
    double ss = 0.0;
    for (double v : est) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / static_cast<double>(est.size() - 1) / static_cast<double>(est.size()));
    rep.trial_means.push_back(mean);
    rep.trial_std_errors.push_back(se);
    if (mean > rep.entropy_x + 3.0 * se) ++rep.violations;
  }
  return rep;
}

std::string EntropyBoundReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["kind"] = "entropy-bound";
  j["M"] = batch_size;
  j["batches_per_trial"] = batches_per_trial;
  j["trials"] = trial_means.size();
  j["H_X"] = entropy_x;
  j["I_XY"] = mutual_information;
  j["bound_estimates"] = trial_means;
  j["std_errors"] = trial_std_errors;
  j["violations"] = violations;
  j["degenerate"] = degenerate;
  return j.dump();
}

}  // namespace ecgan
