#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "poe/errors.hpp"
#include "poe/flowmath.hpp"
#include "poe/rng.hpp"
#include "poe/schedule.hpp"

using namespace poe;

namespace {

// Gaussian data N(mu, cov) pushed through x = alpha y + sigma eps.
struct GaussPath {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;

  Eigen::MatrixXd marginal_cov(const PathPoint& p) const {
    return p.alpha * p.alpha * cov + p.sigma * p.sigma * Eigen::MatrixXd::Identity(mu.size(), mu.size());
  }
  Eigen::VectorXd score(const Eigen::VectorXd& x, const PathPoint& p) const {
    return -marginal_cov(p).ldlt().solve(x - p.alpha * mu);
  }
  Eigen::VectorXd posterior_data(const Eigen::VectorXd& x, const PathPoint& p) const {
    return mu + p.alpha * cov * marginal_cov(p).ldlt().solve(x - p.alpha * mu);
  }
  Eigen::VectorXd posterior_noise(const Eigen::VectorXd& x, const PathPoint& p) const {
    return p.sigma * marginal_cov(p).ldlt().solve(x - p.alpha * mu);
  }
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, const PathPoint& p) const {
    return p.alpha_dot * posterior_data(x, p) + p.sigma_dot * posterior_noise(x, p);
  }
};

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

GaussPath random_path(RngHandle& rng, Eigen::Index d) {
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return rng.normal(); });
  return {rng.normal_vector(d), a * a.transpose() + 0.3 * Eigen::MatrixXd::Identity(d, d)};
}

}  // namespace

TEST_CASE("velocity to score matches the Gaussian path oracle") {
  const GaussPath g{vec({0.0}), Eigen::MatrixXd::Identity(1, 1)};
  const PathPoint p = path_point(PathKind::kLinear, 0.5);
  RngHandle rng(3, 0);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = 2.0 * rng.normal_vector(1);
    const Eigen::VectorXd s = velocity_to_score(g.velocity(x, p), x, p);
    CHECK((s - g.score(x, p)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("conversion round trip at 100 random (x, t) pairs") {
  RngHandle rng(11, 0);
  for (auto kind : {PathKind::kLinear, PathKind::kTrigonometric}) {
    for (int i = 0; i < 100; ++i) {
      const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(3));
      const GaussPath g = random_path(rng, d);
      const PathPoint p = path_point(kind, 0.01 + 0.98 * rng.uniform());
      const Eigen::VectorXd x = 2.0 * rng.normal_vector(d);
      const Eigen::VectorXd v = g.velocity(x, p);
      const Eigen::VectorXd s = velocity_to_score(v, x, p);
      CHECK((s - g.score(x, p)).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((score_to_velocity(s, x, p) - v).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((endpoint_predict(v, x, p) - g.posterior_data(x, p)).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("score at the Gaussian end is -x") {
  const auto sched = make_schedule(10, TimeGrid::kUniform, KappaRule{}, 0);
  RngHandle rng(5, 0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = rng.normal_vector(3);
    const Eigen::VectorXd v = rng.normal_vector(3);
    CHECK((velocity_to_score(v, x, sched, 10) + x).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(velocity_to_score(vec({0.0}), vec({0.0}), sched, 5)(0) == 0.0);
}

TEST_CASE("score conversion is singular at sigma = 0") {
  const auto sched = make_schedule(10, TimeGrid::kUniform, KappaRule{}, 0);
  try {
    velocity_to_score(vec({1.0}), vec({1.0}), sched, 1);
    FAIL("expected a singular-schedule error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSingularSchedule);
    CHECK(std::string(e.what()).find("t=1") != std::string::npos);
  }
}

TEST_CASE("endpoint prediction") {
  const auto sched = make_schedule(50, TimeGrid::kUniform, KappaRule{}, 0);
  SECTION("Dirac data is recovered exactly") {
    const Eigen::VectorXd y = vec({1.5, -0.25});
    RngHandle rng(8, 0);
    for (int t = 2; t <= 50; ++t) {
      const PathPoint p = sched.point(t);
      const Eigen::VectorXd x = rng.normal_vector(2);
      const Eigen::VectorXd v = p.alpha_dot * y + (p.sigma_dot / p.sigma) * (x - p.alpha * y);
      CHECK((endpoint_predict(v, x, p) - y).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SECTION("pass-through at the data end") {
    const Eigen::VectorXd x = vec({0.3, 4.0});
    CHECK(endpoint_predict(vec({9.0, 9.0}), x, sched, 1) == x);
  }
  SECTION("affine in (x, v)") {
    RngHandle rng(9, 0);
    for (int i = 0; i < 20; ++i) {
      const PathPoint p = path_point(PathKind::kTrigonometric, 0.05 + 0.9 * rng.uniform());
      const Eigen::VectorXd x1 = rng.normal_vector(3), x2 = rng.normal_vector(3);
      const Eigen::VectorXd v1 = rng.normal_vector(3), v2 = rng.normal_vector(3);
      const double a = 3.0 * rng.normal(), b = 1.0 - a;
      const Eigen::VectorXd lhs = endpoint_predict(a * v1 + b * v2, a * x1 + b * x2, p);
      const Eigen::VectorXd rhs = a * endpoint_predict(v1, x1, p) + b * endpoint_predict(v2, x2, p);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + std::abs(a)));
    }
  }
}

TEST_CASE("composition of fields") {
  SECTION("single expert is the identity") {
    const ExpertField f{vec({1.0, 2.0}), vec({-1.0, 0.5}), vec({1.0, 1.0})};
    const auto out = compose_fields(std::span<const ExpertField>(&f, 1));
    CHECK(out.velocity == f.velocity);
    CHECK(out.score == f.score);
  }
  SECTION("convex fixed point") {
    const std::vector<ExpertField> fs{{vec({2.0}), vec({1.0}), vec({0.5})}, {vec({2.0}), vec({1.0}), vec({0.5})}};
    CHECK(compose_fields(fs).velocity(0) == 2.0);
  }
  SECTION("average of two Gaussian scores") {
    const PathPoint p = path_point(PathKind::kLinear, 0.999);
    const GaussPath a{vec({0.0}), Eigen::MatrixXd::Identity(1, 1)};
    const GaussPath b{vec({2.0}), Eigen::MatrixXd::Identity(1, 1)};
    const Eigen::VectorXd x = vec({1.0});
    const std::vector<ExpertField> fs{{a.velocity(x, p), a.score(x, p), vec({0.5})},
                                      {b.velocity(x, p), b.score(x, p), vec({0.5})}};
    const double expected = 0.5 * (a.score(x, p)(0) + b.score(x, p)(0));
    CHECK(compose_fields(fs).score(0) == Catch::Approx(expected).margin(1e-12));
    CHECK(compose_product_score(fs)(0) == Catch::Approx(2.0 * expected).margin(1e-12));
  }
  SECTION("weights must sum to one") {
    const std::vector<ExpertField> fs{{vec({1.0}), {}, vec({0.6})}, {vec({1.0}), {}, vec({0.6})}};
    try {
      compose_fields(fs);
      FAIL("expected invalid composition");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kInvalidComposition);
      CHECK(std::string(e.what()).find("0.2") != std::string::npos);
    }
  }
  SECTION("regional product score sums covering experts") {
    const std::vector<ExpertField> fs{{vec({1.0, 0.0}), vec({2.0, 0.0}), vec({1.0, 0.0})},
                                      {vec({0.0, 1.0}), vec({0.0, 3.0}), vec({0.0, 1.0})}};
    CHECK(compose_product_score(fs) == vec({2.0, 3.0}));
  }
}

TEST_CASE("Euler step") {
  const Eigen::VectorXd x = vec({1.0, -2.0});
  CHECK(euler_step(x, Eigen::VectorXd::Zero(2), 0.3) == x);
  CHECK(euler_step(x, vec({5.0, 5.0}), 0.0) == x);

  SECTION("Dirac flow integrates to the data point") {
    const int T = 100;
    const auto sched = make_schedule(T, TimeGrid::kUniform, KappaRule{}, 0);
    const Eigen::VectorXd y = vec({2.0, -1.0, 0.5});
    RngHandle rng(1, 0);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd z = rng.normal_vector(3);
      for (int t = T - 1; t >= 1; --t) {
        const PathPoint p = sched.point(t + 1);
        const Eigen::VectorXd v = p.alpha_dot * y + (p.sigma_dot / p.sigma) * (z - p.alpha * y);
        z = euler_step(z, v, sched, t);
      }
      CHECK((z - y).cwiseAbs().maxCoeff() <= 1e-2);
    }
  }
}

TEST_CASE("Langevin step") {
  SECTION("tiny kappa barely moves") {
    RngHandle rng(4, 0);
    const double kappa = 1e-6;
    const Eigen::VectorXd x = vec({1.0, 2.0, 3.0});
    const Eigen::VectorXd s = vec({10.0, -3.0, 0.5});
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd y = langevin_step(x, s, kappa, rng);
      CHECK((y - x).norm() <= kappa * (s.norm() * kappa / 2 + 6 * std::sqrt(3.0)));
    }
  }
  SECTION("pure noise at kappa 1") {
    RngHandle rng(6, 0);
    const int n = 100000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const double y = langevin_step(vec({0.0}), vec({0.0}), 1.0, rng)(0);
      sum += y;
      sq += y * y;
    }
    const double mean = sum / n;
    CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.02);
  }
  SECTION("ULA stationarity on N(0, 1)") {
    // Chains start at stationary draws; pool E[x^2] over chains since one
    // 5000-step chain sees only a handful of independent draws.
    auto pooled_variance = [](double kappa, int steps) {
      double sq = 0.0;
      const int chains = 200;
      for (int c = 0; c < chains; ++c) {
        RngHandle rng(static_cast<std::uint64_t>(c), 0);
        Eigen::VectorXd x = rng.normal_vector(1);
        for (int i = 0; i < steps; ++i) {
          x = langevin_step(x, -x, kappa, rng);
          sq += x(0) * x(0);
        }
      }
      return sq / (double(chains) * steps);
    };
    CHECK(std::abs(pooled_variance(0.05, 5000) - 1.0) < 0.07);
    CHECK(std::abs(pooled_variance(0.05 / std::sqrt(2.0), 10000) - 1.0) < 0.1);
  }
  SECTION("kappa must be positive") {
    RngHandle rng(1, 0);
    CHECK_THROWS_AS(langevin_step(vec({0.0}), vec({0.0}), 0.0, rng), Error);
  }
}

TEST_CASE("MALA targets the density exactly at a large step") {
  RngHandle rng(12, 0);
  const double kappa = 1.5;  // ULA would overshoot badly here
  const ScoreFn score = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -(x.array() - 1.0) / 0.5; };
  const LogDensityFn logp = [](const Eigen::VectorXd& x) { return -(x(0) - 1.0) * (x(0) - 1.0) / 1.0; };
  Eigen::VectorXd x = vec({0.0});
  const int n = 200000;
  double sum = 0, sq = 0;
  int accepted = 0;
  for (int i = 0; i < n; ++i) {
    bool acc = false;
    x = mala_step(x, kappa, score, logp, rng, &acc);
    accepted += acc;
    sum += x(0);
    sq += x(0) * x(0);
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(std::abs(sq / n - mean * mean - 0.5) < 0.03);
  CHECK(accepted > 0);
  CHECK(accepted < n);
}
