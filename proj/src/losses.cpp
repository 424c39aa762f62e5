#include "ecgan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecgan {

namespace {

double mean_of(std::span<const double> v) {
  require(!v.empty(), "empty batch");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> combine(const std::vector<double>& f, const std::vector<double>& h, double alpha) {
  std::vector<double> out(f.size());
  if (alpha == 0.0) return f;
  require(h.size() == f.size(), "unconditional scores missing or misaligned");
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] + alpha * h[i];
  return out;
}

double log_sum_exp_masked(const std::vector<double>& v, const std::vector<char>& keep) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < v.size(); ++j)
    if (keep[j]) mx = std::max(mx, v[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (keep[j]) s += std::exp(v[j] - mx);
  return mx + std::log(s);
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {alpha, lambda_c, lambda_clf, lambda_g, lambda_d}) {
    require(std::isfinite(v) && v >= 0.0, "loss weights must be finite and nonnegative");
  }
  require(std::isfinite(temperature) && temperature > 0.0, "temperature must be positive");
  require(std::isfinite(margin) && margin > 0.0, "hinge margin must be positive");
}

PairLosses wasserstein_pair_losses(double real_score, double fake_score) {
  return {-real_score + fake_score, -fake_score};
}

double hinge_discriminator_loss(double real_score, double fake_score, double margin) {
  require(margin > 0.0, "hinge margin must be positive");
  return std::max(0.0, margin - real_score) + std::max(0.0, margin + fake_score);
}

double hinge_discriminator_loss(std::span<const double> real_scores, std::span<const double> fake_scores,
                                double margin) {
  require(margin > 0.0, "hinge margin must be positive");
  require(!real_scores.empty() && !fake_scores.empty(), "hinge: empty batch");
  double r = 0.0;
  for (double s : real_scores) r += std::max(0.0, margin - s);
  double f = 0.0;
  for (double s : fake_scores) f += std::max(0.0, margin + s);
  return r / static_cast<double>(real_scores.size()) + f / static_cast<double>(fake_scores.size());
}

double discriminator_adversarial_loss(const AdversarialScores& s, const LossWeights& w) {
  if (w.linear_adversarial) {
    return -mean_of(combine(s.f_real, s.h_real, w.alpha)) + mean_of(combine(s.f_fake, s.h_fake, w.alpha));
  }
  if (w.combined_hinge || w.alpha == 0.0) {
    return hinge_discriminator_loss(combine(s.f_real, s.h_real, w.alpha), combine(s.f_fake, s.h_fake, w.alpha),
                                    w.margin);
  }
  return hinge_discriminator_loss(s.f_real, s.f_fake, w.margin) +
         w.alpha * hinge_discriminator_loss(s.h_real, s.h_fake, w.margin);
}

double generator_adversarial_loss(double f_fake_y, double h_fake, double alpha) {
  return -f_fake_y - alpha * h_fake;
}

double classification_loss(const EnergyLogits& logits, int label) { return -log_posterior(logits, label); }

void ContrastiveBatch::validate() const {
  const std::size_t m = labels.size();
  require(m >= 1, "contrastive batch must be non-empty");
  require(sample_embeddings.size() == m && class_embeddings.size() == m, "contrastive batch fields misaligned");
  const auto dim = sample_embeddings.front().size();
  for (std::size_t i = 0; i < m; ++i) {
    require(sample_embeddings[i].size() == dim && class_embeddings[i].size() == dim,
            "contrastive embeddings must share one dimension");
  }
}

double conditional_contrastive_loss(const ContrastiveBatch& batch, double temperature, bool self_positive) {
  batch.validate();
  require(temperature > 0.0, "temperature must be positive");
  const std::size_t m = batch.labels.size();
  double total = 0.0;
  std::vector<double> logits(m + 1);
  std::vector<char> num(m + 1), den(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    const Vector& li = batch.sample_embeddings[i];
    logits[0] = li.dot(batch.class_embeddings[i]) / temperature;
    num[0] = den[0] = 1;
    for (std::size_t k = 0; k < m; ++k) {
      logits[k + 1] = li.dot(batch.sample_embeddings[k]) / temperature;
      num[k + 1] = batch.labels[k] == batch.labels[i] && (self_positive || k != i);
      den[k + 1] = k != i;
    }
    total += log_sum_exp_masked(logits, num) - log_sum_exp_masked(logits, den);
  }
  return total / static_cast<double>(m);
}

double composite_discriminator_loss(const DiscriminatorTerms& terms, const LossWeights& w) {
  w.validate();
  double loss = discriminator_adversarial_loss(terms.scores, w);
  if (w.lambda_c > 0.0) loss += w.lambda_c * terms.contrastive_real();
  if (w.lambda_clf > 0.0) loss += w.lambda_clf * terms.classification_real();
  return loss;
}

double composite_generator_loss(const GeneratorTerms& terms, const LossWeights& w) {
  w.validate();
  require(!terms.f_fake.empty(), "generator terms: empty batch");
  double adv = 0.0;
  for (std::size_t i = 0; i < terms.f_fake.size(); ++i) {
    adv += generator_adversarial_loss(terms.f_fake[i], w.alpha == 0.0 ? 0.0 : terms.h_fake.at(i), w.alpha);
  }
  double loss = adv / static_cast<double>(terms.f_fake.size());
  if (w.lambda_c > 0.0) loss += w.lambda_c * terms.contrastive_fake();
  return loss;
}

namespace tape {

Graph::Var hinge_discriminator(Graph& g, Graph::Var real, Graph::Var fake, double margin) {
  auto r = g.mean(g.relu(g.add_scalar(g.neg(real), margin)));
  auto f = g.mean(g.relu(g.add_scalar(fake, margin)));
  return g.add(r, f);
}

Graph::Var linear_discriminator(Graph& g, Graph::Var real, Graph::Var fake) {
  return g.sub(g.mean(fake), g.mean(real));
}

Graph::Var discriminator_adversarial(Graph& g, Graph::Var f_real, Graph::Var h_real, Graph::Var f_fake,
                                     Graph::Var h_fake, const LossWeights& w) {
  auto combined = [&](Graph::Var f, Graph::Var h) { return w.alpha == 0.0 ? f : g.add(f, g.scale(h, w.alpha)); };
  if (w.linear_adversarial) return linear_discriminator(g, combined(f_real, h_real), combined(f_fake, h_fake));
  if (w.combined_hinge || w.alpha == 0.0) {
    return hinge_discriminator(g, combined(f_real, h_real), combined(f_fake, h_fake), w.margin);
  }
  return g.add(hinge_discriminator(g, f_real, f_fake, w.margin),
               g.scale(hinge_discriminator(g, h_real, h_fake, w.margin), w.alpha));
}

Graph::Var classification(Graph& g, Graph::Var logits, std::span<const int> labels) {
  return g.mean(g.sub(g.row_logsumexp(logits), g.pick(logits, labels)));
}

Graph::Var conditional_contrastive(Graph& g, Graph::Var sample_emb, Graph::Var class_emb,
                                   std::span<const int> labels, double temperature, bool self_positive) {
  const Eigen::Index m = g.value(sample_emb).rows();
  require(static_cast<Eigen::Index>(labels.size()) == m, "contrastive: label count mismatch");
  require(temperature > 0.0, "temperature must be positive");
  auto to_class = g.scale(g.row_dot(sample_emb, class_emb), 1.0 / temperature);
  auto to_data = g.scale(g.matmul(sample_emb, g.transpose(sample_emb)), 1.0 / temperature);
  auto logits = g.concat_cols(to_class, to_data);

  Matrix num = Matrix::Zero(m, m + 1);
  Matrix den = Matrix::Zero(m, m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    num(i, 0) = den(i, 0) = 1.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (labels[static_cast<std::size_t>(k)] == labels[static_cast<std::size_t>(i)] && (self_positive || k != i))
        num(i, k + 1) = 1.0;
      if (k != i) den(i, k + 1) = 1.0;
    }
  }
  return g.mean(g.sub(g.masked_row_logsumexp(logits, num), g.masked_row_logsumexp(logits, den)));
}

}  // namespace tape

}  // namespace ecgan
