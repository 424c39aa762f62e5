#include "ecgan/networks.hpp"
#include "ecgan/variants.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

using namespace ecgan;

namespace {

struct Pattern {
  const char* name;
  HeadDesign design;
  int alpha, lambda_clf, lambda_c;  // sign of each weight
};

// Rows of the preset correspondence table.
const Pattern kTable[] = {
    {"ECGAN-0", HeadDesign::k_output_energy, 0, 0, 0},
    {"ECGAN-U", HeadDesign::k_output_energy, 1, 0, 0},
    {"ECGAN-C", HeadDesign::k_output_energy, 0, 1, 0},
    {"ECGAN-E", HeadDesign::k_output_energy, 0, 0, 1},
    {"ECGAN-UC", HeadDesign::k_output_energy, 1, 1, 0},
    {"ECGAN-UCE", HeadDesign::k_output_energy, 1, 1, 1},
    {"ProjGAN", HeadDesign::projection_single, 0, 0, 0},
    {"ACGAN", HeadDesign::acgan_split, 0, 0, 0},
    {"ContraGAN", HeadDesign::single_plus_embedding, 0, 0, 1},
};

int sign(double v) { return v > 0.0 ? 1 : 0; }

}  // namespace

TEST_CASE("presets follow the correspondence table") {
  CHECK(preset_names().size() == std::size(kTable));
  for (const auto& row : kTable) {
    CAPTURE(row.name);
    const VariantPreset p = make_preset(row.name);
    CHECK(p.name == row.name);
    CHECK(p.head_design == row.design);
    CHECK(sign(p.weights.alpha) == row.alpha);
    CHECK(sign(p.weights.lambda_clf) == row.lambda_clf);
    CHECK(sign(p.weights.lambda_c) == row.lambda_c);
    if (row.alpha) CHECK(p.weights.alpha == 1.0);
    if (row.lambda_c) CHECK(p.weights.lambda_c == 1.0);
    if (row.lambda_clf) {
      const double v = p.weights.lambda_clf;
      CHECK((v == 1.0 || v == 0.1 || v == 0.05 || v == 0.01));
    }
    CHECK(p.weights.combined_hinge);
  }
  const VariantPreset ac = make_preset("ACGAN");
  CHECK(ac.weights.lambda_g > 0.0);
  CHECK(ac.weights.lambda_d > 0.0);
}

TEST_CASE("unknown preset names are rejected with the valid list") {
  for (const char* bad : {"ECGAN-X", "ecgan-0", "", "BigGAN", "ECGAN-"}) {
    try {
      make_preset(bad);
      FAIL("accepted " << bad);
    } catch (const InvalidInput& e) {
      const std::string msg = e.what();
      for (const auto& name : preset_names()) CHECK(msg.find(name) != std::string::npos);
    }
  }
}

TEST_CASE("overrides rescale weights but keep the variant") {
  const VariantPreset p = make_preset("ECGAN-UC", {{"lambda_clf", 0.05}, {"temperature", 0.5}});
  CHECK(p.weights.lambda_clf == 0.05);
  CHECK(p.weights.temperature == 0.5);
  CHECK_THROWS_AS(make_preset("ECGAN-0", {{"alpha", 1.0}}), InvalidInput);
  CHECK_THROWS_AS(make_preset("ECGAN-UC", {{"lambda_clf", 0.0}}), InvalidInput);
  CHECK_THROWS_AS(make_preset("ECGAN-0", {{"nonsense", 1.0}}), InvalidInput);
  CHECK_THROWS_AS(make_preset("ECGAN-0", {{"temperature", -1.0}}), InvalidInput);
  CHECK_FALSE(make_preset("ECGAN-0", {{"combined_hinge", 0.0}}).weights.combined_hinge);
  CHECK(make_preset("ContraGAN", {{"lambda_c", 0.0}}).weights.lambda_c == 0.0);
}

TEST_CASE("head output counts") {
  CHECK(head_outputs(HeadDesign::k_output_energy, 8) == 8);
  CHECK(head_outputs(HeadDesign::acgan_split, 10) == 11);
  CHECK(head_outputs(HeadDesign::projection_single, 10) == 1);
  CHECK(head_outputs(HeadDesign::single_plus_embedding, 10) == 1);
}

TEST_CASE("active loss terms per preset") {
  const ActiveTerms c = active_terms(make_preset("ECGAN-C"));
  const ActiveTerms ac = active_terms(make_preset("ACGAN"));
  // ECGAN-C: the generator gets the conditional adversarial gradient only.
  CHECK(c.g_conditional_adversarial);
  CHECK_FALSE(c.g_classification);
  CHECK(c.d_classification_real);
  CHECK_FALSE(c.d_classification_fake);
  // ACGAN: unconditional adversarial plus classification on both sides.
  CHECK_FALSE(ac.g_conditional_adversarial);
  CHECK(ac.g_unconditional_adversarial);
  CHECK(ac.g_classification);
  CHECK(ac.d_classification_fake);

  const ActiveTerms zero = active_terms(make_preset("ECGAN-0"));
  const ActiveTerms proj = active_terms(make_preset("ProjGAN"));
  CHECK(zero == proj);

  const ActiveTerms uce = active_terms(make_preset("ECGAN-UCE"));
  CHECK(uce.d_unconditional_adversarial);
  CHECK(uce.d_contrastive);
  CHECK(uce.g_contrastive);
  const ActiveTerms contra = active_terms(make_preset("ContraGAN"));
  CHECK(contra.d_contrastive);
  CHECK_FALSE(contra.d_unconditional_adversarial);
}

TEST_CASE("auxiliary-classifier losses") {
  LossWeights w;
  w.linear_adversarial = true;
  AcganBatch b;
  b.d_real = {1.0};
  b.d_fake = {-1.0};
  b.logits_real = {Vector::Zero(4)};
  b.logits_fake = {Vector::Zero(4)};
  b.labels_real = {2};
  b.labels_fake = {1};
  CHECK(acgan_losses(b, w).d_loss == -2.0);
  w.lambda_d = 1.0;
  CHECK(acgan_losses(b, w).d_loss == doctest::Approx(-2.0 + 2.0 * std::log(4.0)).epsilon(1e-15));

  w.lambda_g = 1.0;
  Vector confident = Vector::Zero(4);
  confident(1) = 60.0;
  b.logits_fake = {confident};
  CHECK(acgan_losses(b, w).g_loss == doctest::Approx(1.0).epsilon(1e-12));

  w.linear_adversarial = false;
  w.lambda_d = 0.0;
  CHECK(acgan_losses(b, w).d_loss == 0.0);
}

TEST_CASE("contrastive baseline losses") {
  LossWeights w;
  w.linear_adversarial = true;
  ContraganBatch b;
  b.d_real = {0.3, -0.2};
  b.d_fake = {0.3, -0.2};
  Vector l(2);
  l << 0.5, 0.5;
  b.contrastive_real = {{l}, {l}, {0}};
  b.contrastive_fake = {{l}, {l}, {1}};
  const LossPair none = contragan_losses(b, w);
  CHECK(none.d_loss == 0.0);
  CHECK(none.g_loss == doctest::Approx(-0.05).epsilon(1e-15));
  w.lambda_c = 1.0;
  const LossPair with = contragan_losses(b, w);
  CHECK(with.d_loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(with.g_loss == doctest::Approx(-0.05 + std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("projection output examples") {
  const ProjectionParams zero(Vector::Zero(2), 0.0, {Vector::Zero(2), Vector::Zero(2)});
  CHECK(projgan_output(zero, Vector::Ones(2), 1) == 0.0);
  Vector wu(2), w1(2), g(2);
  wu << 1, 1;
  w1 << 0, 1;
  g << 1, 0;
  const ProjectionParams p(wu, 0.5, {w1, Vector::Zero(2)});
  CHECK(projgan_output(p, g, 0) == 1.5);
  const ProjectionParams flat(wu, 0.5, {Vector::Zero(2), Vector::Zero(2), Vector::Zero(2)});
  CHECK(projgan_output(flat, g, 0) == projgan_output(flat, g, 2));
}

TEST_CASE("ECGAN-0 with projection-derived head matches the projection discriminator") {
  NetConfig cfg;
  cfg.num_classes = 5;
  cfg.feature_dim = 6;
  cfg.d_hidden = {8};
  cfg.spectral_norm = false;
  cfg.init_seed = 41;
  Discriminator proj(cfg, make_preset("ProjGAN"));
  Discriminator energy(cfg, make_preset("ECGAN-0"));
  energy.copy_trunk_from(proj);
  energy.set_energy_head(from_projection(proj.projection_head()));

  std::mt19937_64 rng(43);
  const Matrix x = randn(100, 2, rng, 2.0);
  std::vector<int> y;
  for (int i = 0; i < 100; ++i) y.push_back(i % 5);
  Graph g;
  const BindMode frozen{false, false};
  const auto xp = g.constant(x);
  const auto op = proj.forward(g, xp, y, frozen);
  const auto oe = energy.forward(g, xp, y, frozen);
  const Matrix sp = g.value(proj.conditional_score(g, op, y));
  const Matrix se = g.value(energy.conditional_score(g, oe, y));
  CHECK((sp - se).cwiseAbs().maxCoeff() <= 1e-6);

  // Untying one class bias changes that class's output only.
  EnergyHeadParams head = energy.energy_head();
  head.bias(3) += 0.25;
  energy.set_energy_head(head);
  Graph g2;
  const auto xe = g2.constant(x);
  const Matrix moved = g2.value(energy.conditional_score(g2, energy.forward(g2, xe, y, frozen), y));
  for (int i = 0; i < 100; ++i) {
    if (y[static_cast<std::size_t>(i)] == 3) CHECK(moved(i, 0) - sp(i, 0) == doctest::Approx(0.25));
    else CHECK(std::abs(moved(i, 0) - sp(i, 0)) <= 1e-6);
  }
}
