#pragma once

#include "ecgan/autodiff.hpp"
#include "ecgan/common.hpp"
#include "ecgan/energy_core.hpp"

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace ecgan {

/// Loss knobs shared by every preset. Only the ones a preset's head design
/// consumes are read.
struct LossWeights {
  double alpha = 0.0;       // unconditional (log-sum-exp) adversarial weight
  double lambda_c = 0.0;    // conditional contrastive weight
  double lambda_clf = 0.0;  // softmax classification weight
  double lambda_g = 0.0;    // auxiliary-classifier generator weight
  double lambda_d = 0.0;    // auxiliary-classifier discriminator weight
  double temperature = 1.0;
  double margin = 1.0;
  bool combined_hinge = true;
  bool linear_adversarial = false;  // plain Wasserstein-form terms instead of the hinge
  bool contrastive_self_positive = true;  // count k = i among the positives

  void validate() const;
};

// ---- scalar forms -------------------------------------------------------

struct PairLosses {
  double d_loss;
  double g_loss_term;
};

/// L_d = −real + fake, L_g = −fake.
PairLosses wasserstein_pair_losses(double real_score, double fake_score);

double hinge_discriminator_loss(double real_score, double fake_score, double margin);

/// Batch form: mean max(0, m − real) + mean max(0, m + fake).
double hinge_discriminator_loss(std::span<const double> real_scores, std::span<const double> fake_scores,
                                double margin);

inline double combined_adversarial_score(double f_y, double h, double alpha) { return f_y + alpha * h; }

/// Per-sample conditional and unconditional discriminator scores for one batch.
struct AdversarialScores {
  std::vector<double> f_real, h_real;
  std::vector<double> f_fake, h_fake;
};

/// Discriminator adversarial term under the configured mode: combined hinge
/// Hinge(f + αh, f' + αh'), separate hinges Hinge(f, f') + α·Hinge(h, h'),
/// or the linear form mean(−(f + αh)) + mean(f' + αh').
double discriminator_adversarial_loss(const AdversarialScores& s, const LossWeights& w);

/// −f_fake_y − α·h_fake.
double generator_adversarial_loss(double f_fake_y, double h_fake, double alpha);

/// −log softmax(logits)[label].
double classification_loss(const EnergyLogits& logits, int label);

struct ContrastiveBatch {
  std::vector<Vector> sample_embeddings;  // l(x_i)
  std::vector<Vector> class_embeddings;   // e(y_i)
  std::vector<int> labels;

  void validate() const;
};

/// Mean over i of log[(d(l_i, e_i) + Σ_k 1[y_k = y_i] d(l_i, l_k)) /
///                    (d(l_i, e_i) + Σ_k 1[k ≠ i] d(l_i, l_k))], d(a, b) = exp(aᵀb / t).
/// With `self_positive` false the numerator skips k = i.
double conditional_contrastive_loss(const ContrastiveBatch& batch, double temperature, bool self_positive = true);

/// Lazily evaluated composite terms; a term whose weight is zero is never evaluated.
struct DiscriminatorTerms {
  AdversarialScores scores;
  std::function<double()> contrastive_real;
  std::function<double()> classification_real;
};

struct GeneratorTerms {
  std::vector<double> f_fake, h_fake;
  std::function<double()> contrastive_fake;
};

double composite_discriminator_loss(const DiscriminatorTerms& terms, const LossWeights& w);
double composite_generator_loss(const GeneratorTerms& terms, const LossWeights& w);

// ---- tape forms ---------------------------------------------------------

namespace tape {

/// Column vectors (m×1) in, 1×1 out.
Graph::Var hinge_discriminator(Graph& g, Graph::Var real, Graph::Var fake, double margin);
Graph::Var linear_discriminator(Graph& g, Graph::Var real, Graph::Var fake);
Graph::Var discriminator_adversarial(Graph& g, Graph::Var f_real, Graph::Var h_real, Graph::Var f_fake,
                                     Graph::Var h_fake, const LossWeights& w);

/// mean(lse(logits) − logits[label]).
Graph::Var classification(Graph& g, Graph::Var logits, std::span<const int> labels);

/// `sample_emb` and `class_emb` are m×d.
Graph::Var conditional_contrastive(Graph& g, Graph::Var sample_emb, Graph::Var class_emb,
                                   std::span<const int> labels, double temperature, bool self_positive);

}  // namespace tape

}  // namespace ecgan
