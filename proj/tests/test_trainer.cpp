#include "ecgan/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace ecgan;
namespace fs = std::filesystem;

namespace {

NetConfig tiny_net() {
  NetConfig cfg;
  cfg.num_classes = 8;
  cfg.noise_dim = 4;
  cfg.feature_dim = 16;
  cfg.class_embed_dim = 4;
  cfg.contrastive_dim = 8;
  cfg.g_hidden = {24};
  cfg.d_hidden = {24};
  cfg.init_seed = 17;
  return cfg;
}

TrainConfig tiny_train(std::int64_t n_iter) {
  TrainConfig t;
  t.n_iter = n_iter;
  t.batch_size = 16;
  t.ema_start_step = 0;
  t.seed = 99;
  return t;
}

struct Fixture {
  OracleMixture mix = OracleMixture::ring();
  LabeledDataset data = sample_mixture(mix, 2000, 5);
  EvalContext eval = EvalContext::for_mixture(mix, 20);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

Matrix values_of(const std::vector<const Parameter*>& params) {
  Eigen::Index total = 0;
  for (auto* p : params) total += p->size();
  Matrix out(1, total);
  Eigen::Index at = 0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->size(); ++i) out(0, at++) = p->value.data()[i];
  }
  return out;
}

Matrix vals(const Generator& g) { return values_of(g.parameters()); }
Matrix vals(const Discriminator& d) { return values_of(d.parameters()); }

std::pair<Matrix, std::vector<int>> real_batch(int m, std::uint64_t seed) {
  const LabeledDataset& d = fixture().data;
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, d.size() - 1);
  Matrix x(m, d.x.cols());
  std::vector<int> y(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Eigen::Index r = pick(rng);
    x.row(i) = d.x.row(r);
    y[static_cast<std::size_t>(i)] = d.y[static_cast<std::size_t>(r)];
  }
  return {x, y};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecgan_trainer_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("zero learning rates leave both networks unchanged") {
  TrainConfig t = tiny_train(1);
  t.lr_d = 0.0;
  t.lr_g = 0.0;
  TrainState s(tiny_net(), make_preset("ECGAN-UCE"), t, fixture().data.label_marginal());
  const Matrix d0 = vals(s.discriminator), g0 = vals(s.generator);

  auto [x, y] = real_batch(16, 1);
  const double ld = discriminator_step(s, x, y);
  CHECK(std::isfinite(ld));
  CHECK(vals(s.discriminator) == d0);

  const double lg = generator_step(s);
  CHECK(std::isfinite(lg));
  CHECK(vals(s.generator) == g0);

  // The average starts at φ and stays there under further updates.
  for (int i = 0; i < 5; ++i) generator_step(s);
  CHECK((vals(s.generator_ema) - g0).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("moving average follows the configured schedule") {
  TrainConfig t = tiny_train(1);
  t.ema_start_step = 3;
  t.ema_decay = 0.9;
  TrainState s(tiny_net(), make_preset("ECGAN-0"), t, fixture().data.label_marginal());
  auto [x, y] = real_batch(16, 2);
  for (int i = 0; i < 2; ++i) {
    discriminator_step(s, x, y);
    generator_step(s);
    CHECK(vals(s.generator_ema) == vals(s.generator));  // copied before the start step
  }
  const Matrix ema_before = vals(s.generator_ema);
  discriminator_step(s, x, y);
  generator_step(s);
  const Matrix expected = 0.9 * ema_before + 0.1 * vals(s.generator);
  CHECK((vals(s.generator_ema) - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("ECGAN-0 discriminator loss is the hinge of its conditional scores") {
  TrainState s(tiny_net(), make_preset("ECGAN-0"), tiny_train(1), fixture().data.label_marginal());
  for (int step = 0; step < 5; ++step) {
    auto [x, y] = real_batch(16, 10 + step);
    // Recreate the fake batch and the single power iteration of the step on a copy.
    Discriminator copy = s.discriminator;
    Rng rng(derive_seed(s.config.seed, {1, static_cast<std::uint64_t>(s.d_updates + 1)}));
    const Matrix z = randn(16, s.net.noise_dim, rng);
    const std::vector<int> fy = sample_labels(s.label_marginal, 16, rng);
    const Matrix fx = s.generator.sample(z, fy);

    Matrix both(32, 2);
    both << x, fx;
    std::vector<int> by = y;
    by.insert(by.end(), fy.begin(), fy.end());
    Graph g;
    const auto out = copy.forward(g, g.constant(both), by, BindMode{false, true});
    const Matrix scores = g.value(copy.conditional_score(g, out, by));
    std::vector<double> real(16), fake(16);
    for (int i = 0; i < 16; ++i) {
      real[static_cast<std::size_t>(i)] = scores(i, 0);
      fake[static_cast<std::size_t>(i)] = scores(16 + i, 0);
    }
    const double expected = hinge_discriminator_loss(real, fake, 1.0);
    CHECK(discriminator_step(s, x, y) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("generator loss without extra terms is the mean negative conditional score") {
  TrainState s(tiny_net(), make_preset("ECGAN-0"), tiny_train(1), fixture().data.label_marginal());
  Rng rng(3);
  const Matrix z = randn(12, s.net.noise_dim, rng);
  const std::vector<int> y = sample_labels(s.label_marginal, 12, rng);
  Graph g;
  const double loss = g.scalar(generator_loss(g, s.generator, s.discriminator, s.preset, z, y, {false, false}));

  Graph h;
  const Matrix x = s.generator.sample(z, y);
  const auto out = s.discriminator.forward(h, h.constant(x), y, {false, false});
  CHECK(loss == doctest::Approx(-h.value(s.discriminator.conditional_score(h, out, y)).mean()).epsilon(1e-12));
}

TEST_CASE("discriminator loss adds the enabled terms") {
  // ECGAN-UCE built on the tape equals the ECGAN-U adversarial term plus
  // independently computed classification and contrastive terms.
  const NetConfig net = tiny_net();
  const VariantPreset uce = make_preset("ECGAN-UCE");
  Discriminator d(net, uce);
  auto [x, y] = real_batch(8, 4);
  auto [fx, fy] = real_batch(8, 5);
  fx.array() += 0.3;
  Graph g;
  const double total = g.scalar(discriminator_loss(g, d, uce, x, y, fx, fy, {false, false}));

  Matrix both(16, 2);
  both << x, fx;
  std::vector<int> by = y;
  by.insert(by.end(), fy.begin(), fy.end());
  Graph h;
  const auto out = d.forward(h, h.constant(both), by, {false, false});
  const Matrix logits = h.value(out.head);
  AdversarialScores s;
  double clf = 0.0;
  for (int i = 0; i < 16; ++i) {
    const Vector row = logits.row(i).transpose();
    const double f = row(by[static_cast<std::size_t>(i)]);
    const double lse = aggregate_energy(row);
    if (i < 8) {
      s.f_real.push_back(f);
      s.h_real.push_back(lse);
      clf += classification_loss(row, by[static_cast<std::size_t>(i)]);
    } else {
      s.f_fake.push_back(f);
      s.h_fake.push_back(lse);
    }
  }
  ContrastiveBatch cb;
  const Matrix emb = h.value(*out.embedding);
  const Matrix cls = h.value(d.class_embeddings(h, y, {false, false}));
  for (int i = 0; i < 8; ++i) {
    cb.sample_embeddings.push_back(emb.row(i).transpose());
    cb.class_embeddings.push_back(cls.row(i).transpose());
    cb.labels.push_back(y[static_cast<std::size_t>(i)]);
  }
  const double expected = discriminator_adversarial_loss(s, uce.weights) + clf / 8.0 +
                          conditional_contrastive_loss(cb, uce.weights.temperature);
  CHECK(total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("update counters and evaluation schedule") {
  SUBCASE("one iteration with two discriminator steps") {
    TrainConfig t = tiny_train(1);
    TrainState s(tiny_net(), make_preset("ECGAN-UC"), t, fixture().data.label_marginal());
    const TrainResult r = train(s, fixture().data, fixture().eval);
    CHECK(s.d_updates == 2);
    CHECK(s.g_updates == 1);
    CHECK(r.history.size() == 1);
    CHECK(r.losses.size() == 1);
  }
  SUBCASE("counters scale with n_iter and n_dis") {
    TrainConfig t = tiny_train(7);
    t.n_dis = 3;
    t.eval_every = 7;
    TrainState s(tiny_net(), make_preset("ECGAN-0"), t, fixture().data.label_marginal());
    const TrainResult r = train(s, fixture().data, fixture().eval);
    CHECK(s.d_updates == 21);
    CHECK(s.g_updates == 7);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].step == 7);
  }
  SUBCASE("periodic evaluations plus the last step") {
    TrainConfig t = tiny_train(5);
    t.eval_every = 2;
    TrainState s(tiny_net(), make_preset("ECGAN-0"), t, fixture().data.label_marginal());
    const TrainResult r = train(s, fixture().data, fixture().eval);
    REQUIRE(r.history.size() == 3);
    CHECK(r.history[0].step == 2);
    CHECK(r.history[1].step == 4);
    CHECK(r.history[2].step == 5);
    for (const auto& rec : r.history) {
      CHECK(rec.preset == "ECGAN-0");
      CHECK(rec.seed == 99);
    }
  }
}

TEST_CASE("fixed seed reproduces losses and metrics bit for bit") {
  TrainConfig t = tiny_train(100);
  t.eval_every = 25;
  auto run = [&] {
    TrainState s(tiny_net(), make_preset("ECGAN-UCE"), t, fixture().data.label_marginal());
    return train(s, fixture().data, fixture().eval);
  };
  const TrainResult a = run(), b = run();
  REQUIRE(a.losses.size() == 100);
  REQUIRE(b.losses.size() == 100);
  for (std::size_t i = 0; i < a.losses.size(); ++i) {
    CHECK(a.losses[i].d_loss == b.losses[i].d_loss);
    CHECK(a.losses[i].g_loss == b.losses[i].g_loss);
    CHECK(std::isfinite(a.losses[i].d_loss));
  }
  REQUIRE(a.history.size() == 4);
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].to_json_line() == b.history[i].to_json_line());

  t.seed = 100;
  TrainState other(tiny_net(), make_preset("ECGAN-UCE"), t, fixture().data.label_marginal());
  const TrainResult c = train(other, fixture().data, fixture().eval);
  CHECK(c.losses[0].d_loss != a.losses[0].d_loss);
}

TEST_CASE("non-finite loss aborts with the batch seed and keeps artifacts") {
  TrainConfig t = tiny_train(3);
  TrainState s(tiny_net(), make_preset("ECGAN-0"), t, fixture().data.label_marginal());
  for (Parameter* p : s.discriminator.parameters()) {
    if (p->name == "discriminator/head/bias") p->value.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  const fs::path dir = scratch_dir("abort");
  try {
    train(s, fixture().data, fixture().eval, dir);
    FAIL("training did not abort");
  } catch (const TrainingAborted& e) {
    CHECK(e.batch_seed() == s.last_batch_seed);
    CHECK(e.step() == 1);
    CHECK(std::string(e.what()).find(std::to_string(e.batch_seed())) != std::string::npos);
  }
  CHECK(fs::exists(dir / "metrics.jsonl"));
  CHECK(fs::exists(dir / "checkpoints" / "aborted.ckpt"));
  CHECK_FALSE(fs::exists(dir / "checkpoints" / "final.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("checkpoints restore the full state") {
  TrainConfig t = tiny_train(6);
  t.eval_every = 3;
  TrainState s(tiny_net(), make_preset("ECGAN-UCE"), t, fixture().data.label_marginal());
  const fs::path dir = scratch_dir("ckpt");
  train(s, fixture().data, fixture().eval, dir);
  CHECK(fs::exists(dir / "checkpoints" / "best.ckpt"));
  REQUIRE(fs::exists(dir / "checkpoints" / "final.ckpt"));

  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const MetricsRecord r = MetricsRecord::from_json_line(line);
    CHECK(r.preset == "ECGAN-UCE");
    ++lines;
  }
  CHECK(lines == 2);

  const TensorMap saved = load_tensors(dir / "checkpoints" / "final.ckpt");
  TrainState restored(tiny_net(), make_preset("ECGAN-UCE"), t, fixture().data.label_marginal());
  load_state_tensors(restored, saved);
  CHECK(restored.d_updates == s.d_updates);
  CHECK(restored.g_updates == s.g_updates);
  CHECK(vals(restored.generator) == vals(s.generator));
  CHECK(vals(restored.generator_ema) == vals(s.generator_ema));
  CHECK(vals(restored.discriminator) == vals(s.discriminator));

  // Continuing from the restored state matches continuing the original.
  auto [x, y] = real_batch(16, 8);
  CHECK(discriminator_step(restored, x, y) == discriminator_step(s, x, y));
  CHECK(generator_step(restored) == generator_step(s));

  TrainState wrong(tiny_net(), make_preset("ECGAN-0"), t, fixture().data.label_marginal());
  CHECK_THROWS_AS(load_state_tensors(wrong, saved), InvalidInput);
  fs::remove_all(dir);
}

TEST_CASE("fake labels follow the supplied marginal") {
  Rng rng(12);
  const std::vector<double> marginal{0.5, 0.0, 0.25, 0.25};
  const std::vector<int> y = sample_labels(marginal, 20000, rng);
  std::vector<int> counts(4, 0);
  for (int v : y) ++counts[static_cast<std::size_t>(v)];
  CHECK(counts[1] == 0);
  CHECK(counts[0] == doctest::Approx(10000).epsilon(0.03));
  CHECK(counts[2] == doctest::Approx(5000).epsilon(0.05));
}

TEST_CASE("training config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.n_dis = 0;
  CHECK_THROWS_AS(t.validate(), InvalidInput);
  t = TrainConfig{};
  t.batch_size = 1;
  CHECK_THROWS_AS(t.validate(), InvalidInput);
  t = TrainConfig{};
  t.lr_d = 0.0;
  CHECK_THROWS_AS(t.validate(), InvalidInput);
  CHECK_NOTHROW(t.validate(true));
}
