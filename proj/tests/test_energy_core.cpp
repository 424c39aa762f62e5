#include "ecgan/energy_core.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ecgan;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Naive reference: direct sum of exponentials, fine for moderate inputs.
double naive_lse(const Vector& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v(i));
  return std::log(s);
}

}  // namespace

TEST_CASE("energy_scores evaluates the linear form") {
  SUBCASE("zero head") {
    const EnergyHeadParams head(Matrix::Zero(3, 4), Vector::Zero(4));
    CHECK(energy_scores(head, vec({1.0, -2.0, 3.0})).isZero(0.0));
  }
  SUBCASE("identity weight picks the feature") {
    const EnergyHeadParams head(Matrix::Identity(3, 3), Vector::Zero(3));
    CHECK(energy_scores(head, vec({1.0, 0.0, 0.0})) == vec({1.0, 0.0, 0.0}));
  }
  SUBCASE("hand-checked column") {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 0) = 1.0;
    w(1, 0) = 1.0;
    const EnergyHeadParams head(w, vec({0.5, 0.0}));
    CHECK(energy_scores(head, vec({1.0, 0.0}))(0) == 1.5);
  }
  SUBCASE("dimension mismatch") {
    const EnergyHeadParams head(Matrix::Zero(3, 2), Vector::Zero(2));
    CHECK_THROWS_AS(energy_scores(head, vec({1.0, 2.0})), InvalidInput);
  }
}

TEST_CASE("energy head rejects bad parameters") {
  CHECK_THROWS_AS(EnergyHeadParams(Matrix::Zero(3, 1), Vector::Zero(1)), InvalidInput);
  CHECK_THROWS_AS(EnergyHeadParams(Matrix::Zero(3, 2), Vector::Zero(3)), InvalidInput);
  Matrix w = Matrix::Zero(2, 2);
  w(0, 1) = std::nan("");
  CHECK_THROWS_AS(EnergyHeadParams(w, Vector::Zero(2)), InvalidInput);
}

TEST_CASE("aggregate_energy is a stable log-sum-exp") {
  CHECK(aggregate_energy(vec({0, 0, 0, 0})) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(aggregate_energy(vec({1000.0, 0.0})) == doctest::Approx(1000.0).epsilon(1e-15));
  CHECK(aggregate_energy(vec({0.0, std::log(3.0)})) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK_THROWS_AS(aggregate_energy(Vector()), InvalidInput);
}

TEST_CASE("class_posterior examples") {
  const Vector p = class_posterior(vec({0.0, 0.0}));
  CHECK(p(0) == doctest::Approx(0.5));
  CHECK(p(1) == doctest::Approx(0.5));
  const Vector q = class_posterior(vec({std::log(2.0), 0.0}));
  CHECK(q(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(q(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("energy head properties on random logits") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::uniform_int_distribution<int> kdist(2, 12);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = kdist(rng);
    Vector logits(k);
    for (int i = 0; i < k; ++i) logits(i) = u(rng);
    const double c = u(rng);
    const Vector shifted = logits.array() + c;
    const double lse = aggregate_energy(logits);
    const Vector post = class_posterior(logits);

    CHECK(std::abs(lse - naive_lse(logits)) <= 1e-12 * std::max(1.0, std::abs(lse)));
    CHECK(lse >= logits.maxCoeff());
    CHECK(lse <= logits.maxCoeff() + std::log(static_cast<double>(k)) + 1e-12);
    CHECK(aggregate_energy(shifted) - lse == doctest::Approx(c).epsilon(1e-12));
    CHECK((class_posterior(shifted) - post).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(post.sum() - 1.0) <= 1e-12);
    CHECK(post.minCoeff() >= 0.0);
    for (int y = 0; y < k; ++y) {
      CHECK(std::abs(std::exp(logits(y) - lse) - post(y)) <= 1e-9);
      CHECK(std::abs(std::exp(log_posterior(logits, y)) - post(y)) <= 1e-12);
    }
  }
}

TEST_CASE("from_projection reproduces the projection head") {
  SUBCASE("zero case") {
    const ProjectionParams proj(Vector::Zero(3), 0.0, {Vector::Zero(3), Vector::Zero(3)});
    const EnergyHeadParams head = from_projection(proj);
    CHECK(head.weight.isZero(0.0));
    CHECK(head.bias.isZero(0.0));
  }
  SUBCASE("hand example") {
    const ProjectionParams proj(vec({1, 1}), 0.5, {vec({0, 1}), vec({0, 0})});
    const Vector g = vec({1, 0});
    CHECK(projection_output(proj, g, 0) == 1.5);
    CHECK(energy_scores(from_projection(proj), g)(0) == 1.5);
  }
  SUBCASE("random instances") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int d = 1 + trial % 9, k = 2 + trial % 7;
      Vector wu(d), g(d);
      for (int i = 0; i < d; ++i) {
        wu(i) = n(rng);
        g(i) = n(rng);
      }
      std::vector<Vector> emb(static_cast<std::size_t>(k), Vector(d));
      for (auto& e : emb)
        for (int i = 0; i < d; ++i) e(i) = n(rng);
      const ProjectionParams proj(wu, n(rng), emb);
      const Vector logits = energy_scores(from_projection(proj), g);
      for (int y = 0; y < k; ++y) {
        // Independent evaluation of (w_u + w_y)ᵀg + b_u.
        const double direct = (wu + emb[static_cast<std::size_t>(y)]).dot(g) + proj.b_u;
        worst = std::max(worst, std::abs(logits(y) - direct));
      }
    }
    CHECK(worst <= 1e-12);
  }
}
