#include "ecgan/variants.hpp"

#include <algorithm>
#include <numeric>

namespace ecgan {

namespace {

constexpr double kDefaultLambdaClf = 1.0;  // first entry of the {1, 0.1, 0.05, 0.01} sweep
constexpr double kDefaultLambdaC = 1.0;
constexpr double kDefaultAlpha = 1.0;
constexpr double kDefaultAcganWeight = 1.0;

double mean_of(const std::vector<double>& v) {
  require(!v.empty(), "empty batch");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double adversarial_pair(const std::vector<double>& real, const std::vector<double>& fake, const LossWeights& w) {
  if (w.linear_adversarial) return -mean_of(real) + mean_of(fake);
  return hinge_discriminator_loss(real, fake, w.margin);
}

double mean_classification(const std::vector<EnergyLogits>& logits, const std::vector<int>& labels) {
  require(logits.size() == labels.size() && !logits.empty(), "classifier logits and labels misaligned");
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += classification_loss(logits[i], labels[i]);
  return s / static_cast<double>(logits.size());
}

[[noreturn]] void throw_unknown_preset(std::string_view name) {
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw InvalidInput("unknown preset '" + std::string(name) + "'; valid presets: " + valid);
}

}  // namespace

std::string_view to_string(HeadDesign d) {
  switch (d) {
    case HeadDesign::k_output_energy: return "k_output_energy";
    case HeadDesign::projection_single: return "projection_single";
    case HeadDesign::acgan_split: return "acgan_split";
    case HeadDesign::single_plus_embedding: return "single_plus_embedding";
  }
  return "unknown";
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"ECGAN-0",  "ECGAN-U", "ECGAN-C",   "ECGAN-E",  "ECGAN-UC",
                                                 "ECGAN-UCE", "ProjGAN", "ACGAN", "ContraGAN"};
  return names;
}

VariantPreset make_preset(std::string_view name, const std::map<std::string, double>& overrides) {
  VariantPreset p;
  p.name = std::string(name);
  LossWeights& w = p.weights;

  if (name.starts_with("ECGAN-")) {
    const std::string_view suffix = name.substr(6);
    if (suffix != "0" && suffix != "U" && suffix != "C" && suffix != "E" && suffix != "UC" && suffix != "UCE") {
      throw_unknown_preset(name);
    }
    p.head_design = HeadDesign::k_output_energy;
    if (suffix != "0") {
      if (suffix.find('U') != std::string_view::npos) w.alpha = kDefaultAlpha;
      if (suffix.find('C') != std::string_view::npos) w.lambda_clf = kDefaultLambdaClf;
      if (suffix.find('E') != std::string_view::npos) w.lambda_c = kDefaultLambdaC;
    }
  } else if (name == "ProjGAN") {
    p.head_design = HeadDesign::projection_single;
  } else if (name == "ACGAN") {
    p.head_design = HeadDesign::acgan_split;
    w.lambda_g = kDefaultAcganWeight;
    w.lambda_d = kDefaultAcganWeight;
  } else if (name == "ContraGAN") {
    p.head_design = HeadDesign::single_plus_embedding;
    w.lambda_c = kDefaultLambdaC;
  } else {
    throw_unknown_preset(name);
  }

  const bool ecgan = p.head_design == HeadDesign::k_output_energy;
  for (const auto& [key, value] : overrides) {
    double* slot = nullptr;
    bool* flag = nullptr;
    if (key == "alpha") slot = &w.alpha;
    else if (key == "lambda_c") slot = &w.lambda_c;
    else if (key == "lambda_clf") slot = &w.lambda_clf;
    else if (key == "lambda_g") slot = &w.lambda_g;
    else if (key == "lambda_d") slot = &w.lambda_d;
    else if (key == "temperature") slot = &w.temperature;
    else if (key == "margin") slot = &w.margin;
    else if (key == "combined_hinge") flag = &w.combined_hinge;
    else if (key == "linear_adversarial") flag = &w.linear_adversarial;
    else if (key == "contrastive_self_positive") flag = &w.contrastive_self_positive;
    else throw InvalidInput("unknown loss override '" + key + "'");

    if (flag != nullptr) {
      *flag = value != 0.0;
      continue;
    }
    const bool pattern_key = key == "alpha" || key == "lambda_c" || key == "lambda_clf";
    if (ecgan && pattern_key && ((*slot > 0.0) != (value > 0.0))) {
      throw InvalidInput("override " + key + "=" + std::to_string(value) + " would change which variant " +
                         p.name + " is; pick the matching preset instead");
    }
    *slot = value;
  }
  w.validate();
  return p;
}

ActiveTerms active_terms(const VariantPreset& preset) {
  const LossWeights& w = preset.weights;
  ActiveTerms t;
  switch (preset.head_design) {
    case HeadDesign::k_output_energy:
      t.d_conditional_adversarial = t.g_conditional_adversarial = true;
      t.d_unconditional_adversarial = t.g_unconditional_adversarial = w.alpha > 0.0;
      t.d_classification_real = w.lambda_clf > 0.0;
      t.d_contrastive = t.g_contrastive = w.lambda_c > 0.0;
      break;
    case HeadDesign::projection_single:
      t.d_conditional_adversarial = t.g_conditional_adversarial = true;
      break;
    case HeadDesign::acgan_split:
      t.d_unconditional_adversarial = t.g_unconditional_adversarial = true;
      t.d_classification_real = t.d_classification_fake = w.lambda_d > 0.0;
      t.g_classification = w.lambda_g > 0.0;
      break;
    case HeadDesign::single_plus_embedding:
      t.d_conditional_adversarial = t.g_conditional_adversarial = true;
      t.d_contrastive = t.g_contrastive = w.lambda_c > 0.0;
      break;
  }
  return t;
}

int head_outputs(HeadDesign design, int num_classes) {
  switch (design) {
    case HeadDesign::k_output_energy: return num_classes;
    case HeadDesign::acgan_split: return num_classes + 1;
    case HeadDesign::projection_single:
    case HeadDesign::single_plus_embedding: return 1;
  }
  return 0;
}

LossPair acgan_losses(const AcganBatch& b, const LossWeights& w) {
  w.validate();
  LossPair out{};
  out.d_loss = adversarial_pair(b.d_real, b.d_fake, w);
  if (w.lambda_d > 0.0) {
    out.d_loss += w.lambda_d * (mean_classification(b.logits_real, b.labels_real) +
                                mean_classification(b.logits_fake, b.labels_fake));
  }
  out.g_loss = -mean_of(b.d_fake);
  if (w.lambda_g > 0.0) out.g_loss += w.lambda_g * mean_classification(b.logits_fake, b.labels_fake);
  return out;
}

LossPair contragan_losses(const ContraganBatch& b, const LossWeights& w) {
  w.validate();
  LossPair out{};
  out.d_loss = adversarial_pair(b.d_real, b.d_fake, w);
  out.g_loss = -mean_of(b.d_fake);
  if (w.lambda_c > 0.0) {
    out.d_loss += w.lambda_c * conditional_contrastive_loss(b.contrastive_real, w.temperature,
                                                            w.contrastive_self_positive);
    out.g_loss += w.lambda_c * conditional_contrastive_loss(b.contrastive_fake, w.temperature,
                                                            w.contrastive_self_positive);
  }
  return out;
}

}  // namespace ecgan
