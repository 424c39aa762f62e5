#include "ecgan/networks.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ecgan;

namespace {

double top_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

NetConfig small_config() {
  NetConfig cfg;
  cfg.num_classes = 8;
  cfg.noise_dim = 2;
  cfg.feature_dim = 16;
  cfg.class_embed_dim = 4;
  cfg.contrastive_dim = 4;
  cfg.g_hidden = {16};
  cfg.d_hidden = {16};
  cfg.init_seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("spectral normalization examples") {
  Rng rng(1);
  SUBCASE("identity is unchanged") {
    SpectralNormState s = SpectralNormState::random(4, 4, rng);
    CHECK((spectral_normalize(Matrix::Identity(4, 4), s, 1) - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <=
          1e-12);
  }
  SUBCASE("diagonal scaling") {
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 1.0;
    SpectralNormState s = SpectralNormState::random(2, 2, rng);
    const Matrix n = spectral_normalize(d, s, 50);
    CHECK(n(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n(1, 1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(n(0, 1) == 0.0);
  }
  SUBCASE("zero matrix is rejected") {
    SpectralNormState s = SpectralNormState::random(3, 2, rng);
    CHECK_THROWS_AS(spectral_normalize(Matrix::Zero(3, 2), s, 1), InvalidInput);
  }
}

TEST_CASE("normalized random matrices have unit top singular value") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = randn(16, 8, rng, 0.1 + trial);
    SpectralNormState s = SpectralNormState::random(16, 8, rng);
    const Matrix n = spectral_normalize(w, s, 50);
    CHECK(std::abs(top_singular_value(n) - 1.0) <= 1e-3);
    // Lipschitz probe.
    for (int p = 0; p < 20; ++p) {
      const Vector x = randn(8, 1, rng);
      CHECK((n * x).norm() <= (1.0 + 1e-2) * x.norm());
    }
  }
}

TEST_CASE("persistent power iteration converges across calls") {
  Rng rng(3);
  const Matrix w = randn(12, 6, rng);
  SpectralNormState s = SpectralNormState::random(12, 6, rng);
  double sigma = 0.0;
  for (int step = 0; step < 100; ++step) sigma = power_iterate(w, s, 1);
  CHECK(sigma == doctest::Approx(top_singular_value(w)).epsilon(1e-6));
}

TEST_CASE("spectral_norm tape op differentiates with fixed vectors") {
  Rng rng(4);
  Parameter w("w", randn(5, 3, rng));
  SpectralNormState s = SpectralNormState::random(5, 3, rng);
  power_iterate(w.value, s, 3);
  const Matrix probe = randn(5, 3, rng);
  auto loss = [&](const Matrix& value) { return (value / s.u.dot(value * s.v)).cwiseProduct(probe).sum(); };

  Graph g;
  auto out = g.sum(g.mul(g.spectral_norm(g.param(w), s.u, s.v), g.constant(probe)));
  CHECK(g.scalar(out) == doctest::Approx(loss(w.value)).epsilon(1e-14));
  g.backward(out);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < w.value.size(); ++i) {
    Matrix up = w.value, dn = w.value;
    up.data()[i] += h;
    dn.data()[i] -= h;
    CHECK(w.grad.data()[i] == doctest::Approx((loss(up) - loss(dn)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("ema update") {
  Parameter avg("p", Matrix::Zero(2, 3)), cur("p", Matrix::Ones(2, 3));
  std::vector<Parameter*> a{&avg};
  std::vector<const Parameter*> c{&cur};

  ema_update(a, c, 1.0);
  CHECK(avg.value.isZero(0.0));
  ema_update(a, c, 0.5);
  CHECK((avg.value.array() == 0.5).all());
  ema_update(a, c, 0.0);
  CHECK(avg.value == cur.value);

  Parameter wrong("q", Matrix::Zero(3, 2));
  std::vector<Parameter*> bad{&wrong};
  CHECK_THROWS_AS(ema_update(bad, c, 0.5), InvalidInput);
  CHECK_THROWS_AS(ema_update(a, c, 1.5), InvalidInput);
}

TEST_CASE("ema contracts geometrically toward a constant target") {
  Rng rng(6);
  Parameter avg("p", randn(4, 4, rng)), cur("p", randn(4, 4, rng));
  std::vector<Parameter*> a{&avg};
  std::vector<const Parameter*> c{&cur};
  for (double decay : {0.5, 0.9, 0.9999}) {
    for (int step = 0; step < 50; ++step) {
      const Matrix before = avg.value - cur.value;
      ema_update(a, c, decay);
      const Matrix after = avg.value - cur.value;
      // Elementwise: after = decay · before, up to rounding of the update.
      CHECK((after - decay * before).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + cur.value.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("generator and discriminator shape contracts") {
  NetConfig cfg = small_config();
  Generator gen = build_generator(cfg);
  Rng rng(7);
  const Matrix z = randn(5, cfg.noise_dim, rng);
  const std::vector<int> y{0, 1, 2, 3, 7};
  const Matrix x = gen.sample(z, y);
  CHECK(x.rows() == 5);
  CHECK(x.cols() == 2);
  CHECK(gen.sample(z, y) == x);
  CHECK_THROWS_AS(gen.sample(z, std::vector<int>{0, 1, 2, 3, 8}), InvalidInput);

  for (const char* name : {"ECGAN-0", "ECGAN-UCE", "ProjGAN", "ACGAN", "ContraGAN"}) {
    CAPTURE(name);
    const VariantPreset preset = make_preset(name);
    Discriminator d = build_discriminator(cfg, preset);
    Graph g;
    const auto out = d.forward(g, g.constant(x), y, BindMode{false, false});
    CHECK(g.value(out.features).cols() == cfg.feature_dim);
    CHECK(g.value(out.head).cols() == head_outputs(preset.head_design, cfg.num_classes));
    CHECK(out.embedding.has_value() == (preset.weights.lambda_c > 0.0));
  }

  NetConfig ten = cfg;
  ten.num_classes = 10;
  Discriminator ac = build_discriminator(ten, make_preset("ACGAN"));
  Graph g;
  CHECK(g.value(ac.forward(g, g.constant(Matrix::Zero(3, 2)), std::vector<int>{0, 1, 9}, {}).head).cols() == 11);
}

TEST_CASE("image backbone shapes") {
  NetConfig cfg = small_config();
  cfg.backbone = Backbone::small_conv;
  cfg.data_shape = {3, 8, 8};
  cfg.num_classes = 3;
  Generator gen = build_generator(cfg);
  Rng rng(8);
  const Matrix x = gen.sample(randn(4, cfg.noise_dim, rng), std::vector<int>{0, 1, 2, 0});
  CHECK(x.cols() == 3 * 8 * 8);
  CHECK(x.cwiseAbs().maxCoeff() <= 1.0);
  Discriminator d = build_discriminator(cfg, make_preset("ECGAN-UC"));
  Graph g;
  CHECK(g.value(d.forward(g, g.constant(x), std::vector<int>{0, 1, 2, 0}, {}).head).cols() == 3);
}

TEST_CASE("invalid network configs are rejected") {
  NetConfig cfg = small_config();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(build_generator(cfg), InvalidInput);
  cfg = small_config();
  cfg.noise_dim = 0;
  CHECK_THROWS_AS(build_generator(cfg), InvalidInput);
  cfg = small_config();
  cfg.g_hidden = {16, -1};
  CHECK_THROWS_AS(build_generator(cfg), InvalidInput);
}

TEST_CASE("adam") {
  Rng rng(9);
  SUBCASE("zero learning rate leaves parameters unchanged") {
    Parameter p("p", randn(3, 3, rng));
    const Matrix before = p.value;
    Adam opt({&p}, 0.0, 0.5, 0.999);
    for (int i = 0; i < 10; ++i) {
      p.grad = randn(3, 3, rng);
      opt.step();
    }
    CHECK(p.value == before);
  }
  SUBCASE("first step moves by lr in the gradient sign") {
    Parameter p("p", randn(3, 3, rng));
    const Matrix before = p.value;
    p.grad = randn(3, 3, rng);
    const Matrix grad = p.grad;
    Adam opt({&p}, 0.01, 0.5, 0.999, 1e-8);
    opt.step();
    // Bias-corrected moments on step 1 are g and g², so the step is lr·g/(|g| + eps).
    const Matrix expected = before.array() - 0.01 * grad.array() / (grad.array().abs() + 1e-8);
    CHECK((p.value - expected).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(opt.steps() == 1);
  }
}
