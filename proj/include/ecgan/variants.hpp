#pragma once

#include "ecgan/energy_core.hpp"
#include "ecgan/losses.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ecgan {

enum class HeadDesign {
  k_output_energy,        // K per-class energies
  projection_single,      // (w_u + w_y)ᵀ g + b_u
  acgan_split,            // output 0 = D(x), outputs 1..K = classifier logits
  single_plus_embedding,  // projection score plus a contrastive embedding
};

std::string_view to_string(HeadDesign d);

struct VariantPreset {
  std::string name;
  HeadDesign head_design = HeadDesign::k_output_energy;
  LossWeights weights;
};

/// Which loss terms a preset switches on, per optimization side.
struct ActiveTerms {
  bool d_conditional_adversarial = false;
  bool d_unconditional_adversarial = false;
  bool d_classification_real = false;
  bool d_classification_fake = false;
  bool d_contrastive = false;
  bool g_conditional_adversarial = false;
  bool g_unconditional_adversarial = false;
  bool g_classification = false;
  bool g_contrastive = false;

  bool operator==(const ActiveTerms&) const = default;
};

const std::vector<std::string>& preset_names();

/// Builds a named preset. `overrides` keys: alpha, lambda_c, lambda_clf,
/// lambda_g, lambda_d, temperature, margin, combined_hinge,
/// linear_adversarial, contrastive_self_positive. Boolean keys take 0/1.
/// Overrides may rescale an enabled weight but may not switch a weight of an
/// ECGAN preset on or off, since that would change which variant it is.
VariantPreset make_preset(std::string_view name, const std::map<std::string, double>& overrides = {});

ActiveTerms active_terms(const VariantPreset& preset);

/// Number of head outputs the preset needs for K classes.
int head_outputs(HeadDesign design, int num_classes);

struct LossPair {
  double d_loss;
  double g_loss;
};

/// Auxiliary-classifier baseline. Batch vectors are per-sample scores; the
/// classifier logits are K-wide rows.
struct AcganBatch {
  std::vector<double> d_real, d_fake;
  std::vector<EnergyLogits> logits_real, logits_fake;
  std::vector<int> labels_real, labels_fake;
};
LossPair acgan_losses(const AcganBatch& batch, const LossWeights& w);

/// Contrastive baseline on a single-output conditional head.
struct ContraganBatch {
  std::vector<double> d_real, d_fake;  // D(x, y), D(G(z, y), y)
  ContrastiveBatch contrastive_real;
  ContrastiveBatch contrastive_fake;
};
LossPair contragan_losses(const ContraganBatch& batch, const LossWeights& w);

inline double projgan_output(const ProjectionParams& proj, const Vector& features, int label) {
  return projection_output(proj, features, label);
}

}  // namespace ecgan
