#include "ecgan/verify.hpp"

#include "ecgan/energy_core.hpp"
#include "ecgan/trainer.hpp"

#include <cmath>
#include <sstream>

namespace ecgan {

namespace {

Vector random_distribution(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::uniform_real_distribution<double> spread(0.1, 4.0);
  const double s = spread(rng);
  const double sparsity = ud(rng) < 0.3 ? 0.4 : 0.0;
  Vector q(n);
  for (Eigen::Index i = 0; i < n; ++i) q[i] = ud(rng) < sparsity ? 0.0 : std::exp(s * nd(rng));
  if (q.sum() == 0.0) q[std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng)] = 1.0;
  return q / q.sum();
}

// KL(q ‖ softmax(f)) summed term by term.
double kl_to_gibbs(const Vector& q, const Vector& f) {
  const double mx = f.maxCoeff();
  const double log_z = mx + std::log((f.array() - mx).exp().sum());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) kl += q[i] * (std::log(q[i]) - (f[i] - log_z));
  }
  return kl;
}

template <typename Fn>
double loss_at(Fn&& fn) {
  Graph g;
  return g.scalar(fn(g, BindMode{false, false}));
}

}  // namespace

std::string SuiteResult::summary() const {
  std::ostringstream os;
  os << name << ": " << (ok() ? "PASS" : "FAIL") << " " << passed << "/" << total << " (" << metric << " "
     << max_error << ")";
  return os.str();
}

SuiteResult verify_duality(std::uint64_t seed, int instances, int distributions) {
  SuiteResult r;
  r.name = "duality";
  std::uniform_int_distribution<int> size(1, 64);
  std::uniform_int_distribution<int> classes(1, 8);
  std::uniform_real_distribution<double> scale(0.01, 8.0);
  for (int k = 0; k < instances; ++k) {
    Rng rng(derive_seed(seed, {0xd0a1, static_cast<std::uint64_t>(k)}));
    PartitionInstance inst;
    const int n = size(rng);
    const double s = scale(rng);
    inst.energies = randn(n, 1, rng, s).col(0);
    inst.class_energies = randn(n, classes(rng), rng, s);

    bool ok = true;
    std::string why;
    auto note = [&](double err, double tol, const std::string& what) {
      r.max_error = std::max(r.max_error, err);
      if (!(err <= tol) && ok) {
        ok = false;
        why = "instance " + std::to_string(k) + ": " + what + " off by " + std::to_string(err);
      }
    };

    const double log_z = brute_force_log_partition(inst);
    note(std::abs(duality_gap(gibbs_distribution(inst.energies), inst)), 1e-9, "Gibbs gap");
    for (Eigen::Index y = 0; y < inst.class_energies->cols(); ++y) {
      PartitionInstance column;
      column.energies = inst.class_energies->col(y);
      note(std::abs(duality_gap(gibbs_distribution(column.energies), column)), 1e-9, "class Gibbs gap");
      note(std::abs(brute_force_log_partition(column) - brute_force_log_partition(inst, static_cast<int>(y))),
           1e-12, "class log-partition");
    }
    for (int j = 0; j < distributions; ++j) {
      const Vector q = random_distribution(n, rng);
      const double gap = duality_gap(q, inst);
      note(std::abs(gap - kl_to_gibbs(q, inst.energies)), 1e-9, "gap vs KL");
      const double objective = q.dot(inst.energies) + shannon_entropy(q);
      note(std::max(0.0, objective - log_z), 1e-9, "variational objective above log Z");
    }
    ++r.total;
    if (ok) ++r.passed;
    else r.failures.push_back(why);
  }
  return r;
}

std::vector<EntropyBoundCase> entropy_bound_cases(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xe7}));
  std::vector<EntropyBoundCase> cases;
  for (int m : {2, 8, 32}) {
    {
      EntropyBoundCase c;
      c.label = "identity8/aligned/M=" + std::to_string(m);
      c.joint.p = Matrix::Identity(8, 8) / 8.0;
      // e(y) = l(y): off-diagonal terms l(x_i)ᵀl(x_j) then equal l(x_i)ᵀe(y_j).
      c.critic.l = 3.0 * Matrix::Identity(8, 8);
      c.critic.e = c.critic.l;
      c.batch_size = m;
      cases.push_back(std::move(c));
    }
    {
      EntropyBoundCase c;
      c.label = "independent6x4/random/M=" + std::to_string(m);
      const Vector px = random_distribution(6, rng);
      const Vector py = random_distribution(4, rng);
      c.joint.p = px * py.transpose();
      c.joint.p /= c.joint.p.sum();
      c.critic.l = randn(6, 4, rng, 0.5);
      c.critic.e = randn(4, 4, rng, 0.5);
      c.batch_size = m;
      cases.push_back(std::move(c));
    }
    {
      EntropyBoundCase c;
      c.label = "random6x4/random/M=" + std::to_string(m);
      c.joint.p = randn(6, 4, rng).array().exp().matrix();
      c.joint.p /= c.joint.p.sum();
      c.critic.l = randn(6, 4, rng, 0.5);
      c.critic.e = randn(4, 4, rng, 0.5);
      c.batch_size = m;
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

SuiteResult verify_entropy_bound(std::uint64_t seed, int trials_per_case, std::vector<EntropyBoundReport>* reports) {
  SuiteResult r;
  r.name = "entropy-bound";
  r.metric = "max standard errors above H(X)";
  const auto cases = entropy_bound_cases(seed);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const EntropyBoundReport rep =
        entropy_bound_check(c.joint, c.batch_size, trials_per_case, c.critic, derive_seed(seed, {0xb0, i}));
    r.total += static_cast<int>(rep.trial_means.size());
    r.passed += static_cast<int>(rep.trial_means.size()) - rep.violations;
    for (std::size_t t = 0; t < rep.trial_means.size(); ++t) {
      // Excess over H(X) in standard errors; positive means the estimate sits above the entropy.
      const double z = (rep.trial_means[t] - rep.entropy_x) / std::max(rep.trial_std_errors[t], 1e-300);
      r.max_error = t == 0 && i == 0 ? z : std::max(r.max_error, z);
    }
    if (rep.violations > 0) {
      r.failures.push_back(c.label + ": " + std::to_string(rep.violations) + " trial(s) above H(X) + 3 SE");
    }
    if (reports) reports->push_back(rep);
  }
  return r;
}

NetConfig gradient_check_net() {
  NetConfig net;
  net.data_shape = {2, 1, 1};
  net.num_classes = 3;
  net.noise_dim = 2;
  net.class_embed_dim = 2;
  net.g_hidden = {4};
  net.d_hidden = {4};
  net.feature_dim = 4;
  net.contrastive_dim = 2;
  // tanh keeps the networks smooth so finite differences see no kinks.
  net.activation = Activation::tanh;
  net.spectral_norm = true;
  return net;
}

double gradient_relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

SuiteResult verify_gradients(std::uint64_t seed, double tolerance) {
  SuiteResult r;
  r.name = "gradients";
  NetConfig net = gradient_check_net();
  net.init_seed = seed;
  const VariantPreset preset = make_preset("ECGAN-UCE");
  Generator gen(net);
  Discriminator dis(net, preset);

  Rng rng(derive_seed(seed, {0x9ad}));
  const std::vector<int> real_y{0, 0, 1, 1, 2, 2};
  const std::vector<int> fake_y{0, 1, 2, 0, 1, 2};
  const Matrix real_x = randn(6, net.data_dim(), rng, 2.0);
  const Matrix z = randn(6, net.noise_dim, rng);
  const Matrix fake_x = gen.sample(z, fake_y);

  const auto d_loss = [&](Graph& g, BindMode mode) {
    return discriminator_loss(g, dis, preset, real_x, real_y, fake_x, fake_y, mode);
  };
  const auto g_loss = [&](Graph& g, BindMode mode) { return generator_loss(g, gen, dis, preset, z, fake_y, mode); };

  auto check = [&](const char* which, std::vector<Parameter*> params, const auto& loss) {
    int count = 0;
    for (Parameter* p : params) p->zero_grad();
    {
      Graph g;
      g.backward(loss(g, BindMode{true, false}));
    }
    constexpr double h = 1e-5;
    for (Parameter* p : params) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        double& w = p->value.data()[i];
        const double saved = w;
        w = saved + h;
        const double up = loss_at(loss);
        w = saved - h;
        const double down = loss_at(loss);
        w = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = gradient_relative_error(p->grad.data()[i], numeric);
        r.max_error = std::max(r.max_error, err);
        ++r.total;
        if (err <= tolerance) {
          ++r.passed;
        } else if (r.failures.size() < 10) {
          r.failures.push_back(std::string(which) + " " + p->name + "[" + std::to_string(i) +
                               "]: analytic " + std::to_string(p->grad.data()[i]) + " numeric " +
                               std::to_string(numeric));
        }
        ++count;
      }
    }
    return count;
  };

  const int n_d = check("L_D", dis.parameters(), d_loss);
  const int n_g = check("L_G", gen.parameters(), g_loss);
  require(n_d + n_g <= 200, "gradient-check network exceeds 200 parameters");
  return r;
}

SuiteResult verify_equivalence(std::uint64_t seed, int triples) {
  SuiteResult r;
  r.name = "equivalence";
  std::uniform_int_distribution<int> dims(1, 16);
  std::uniform_int_distribution<int> classes(2, 10);
  for (int k = 0; k < triples; ++k) {
    Rng rng(derive_seed(seed, {0xe9, static_cast<std::uint64_t>(k)}));
    const int d = dims(rng);
    const int K = classes(rng);
    Vector w_u = randn(d, 1, rng).col(0);
    const double b_u = randn(1, 1, rng)(0, 0);
    std::vector<Vector> embeddings;
    for (int y = 0; y < K; ++y) embeddings.push_back(randn(d, 1, rng).col(0));
    const ProjectionParams proj(std::move(w_u), b_u, std::move(embeddings));
    const Vector features = randn(d, 1, rng, 3.0).col(0);
    const int label = std::uniform_int_distribution<int>(0, K - 1)(rng);

    const EnergyHeadParams head = from_projection(proj);
    const EnergyLogits logits = energy_scores(head, features);
    const double expected = projection_output(proj, features, label);
    const double err = std::abs(logits[label] - expected);
    r.max_error = std::max(r.max_error, err);
    ++r.total;
    if (err <= 1e-6) ++r.passed;
    else r.failures.push_back("triple " + std::to_string(k) + ": projection mismatch " + std::to_string(err));

    // Untying one bias moves that class alone; a projection head shifts every
    // class together, so the perturbed head has no projection counterpart.
    EnergyHeadParams untied = head;
    untied.bias[label] += 0.5;
    const EnergyLogits moved = energy_scores(untied, features);
    bool general = std::abs(moved[label] - logits[label] - 0.5) < 1e-9;
    for (int y = 0; y < K; ++y) {
      if (y != label) general = general && moved[y] == logits[y];
    }
    general = general && (untied.bias.array() != untied.bias[0]).any();
    ++r.total;
    if (general) ++r.passed;
    else r.failures.push_back("triple " + std::to_string(k) + ": bias perturbation did not generalize");
  }
  return r;
}

}  // namespace ecgan
