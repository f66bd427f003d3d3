#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "poe/errors.hpp"
#include "poe/oracle.hpp"
#include "poe/rng.hpp"

using namespace poe;
using namespace poe::oracle;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Gaussian g1(double mean, double var) { return {vec({mean}), Eigen::MatrixXd::Constant(1, 1, var)}; }

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

double bimodal(double x) { return 0.5 * normal_pdf(x, -2.0, 0.25) + 0.5 * normal_pdf(x, 2.0, 0.25); }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kInvalidConfig;
}

// Half L1 distance between a grid density and a closed-form pdf on the grid.
double grid_tv(const ExactDensity& grid, const std::function<double(const Eigen::VectorXd&)>& pdf) {
  const auto& g = std::get<Grid>(grid.representation());
  double tv = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i) tv += std::abs(g.values[i] - pdf(g.point(i)));
  return 0.5 * tv * g.cell_volume;
}

}  // namespace

TEST_CASE("Gaussian products") {
  SECTION("N(0,1) x N(2,1) = N(1, 0.5)") {
    const std::vector<Gaussian> f{g1(0.0, 1.0), g1(2.0, 1.0)};
    const auto p = gaussian_product(f);
    CHECK(p.mean()(0) == Catch::Approx(1.0).margin(1e-14));
    CHECK(p.covariance()(0, 0) == Catch::Approx(0.5).margin(1e-14));
  }
  SECTION("self product halves the covariance") {
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.4, 0.4, 1.0;
    const Gaussian g{vec({1.0, -1.0}), cov};
    const std::vector<Gaussian> f{g, g};
    const auto p = gaussian_product(f);
    CHECK((p.mean() - g.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.covariance() - cov / 2.0).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("single factor") {
    const std::vector<Gaussian> f{g1(0.3, 1.7)};
    const auto p = gaussian_product(f);
    CHECK(p.mean()(0) == Catch::Approx(0.3));
    CHECK(p.covariance()(0, 0) == Catch::Approx(1.7));
  }
  SECTION("non-SPD covariance") {
    const std::vector<Gaussian> f{g1(0.0, 1.0), g1(0.0, -1.0)};
    CHECK(kind_of([&] { gaussian_product(f); }) == ErrorKind::kInvalidArgument);
    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, 0.0, 1.0;
    const std::vector<Gaussian> h{{vec({0.0, 0.0}), asym}};
    CHECK(kind_of([&] { gaussian_product(h); }) == ErrorKind::kInvalidArgument);
  }
  SECTION("tilting") {
    const auto t = tilted_gaussian(g1(0.0, 2.0), vec({0.5}));
    CHECK(t.mean()(0) == Catch::Approx(1.0));
    CHECK(t.covariance()(0, 0) == Catch::Approx(2.0));
  }
}

TEST_CASE("grid products") {
  SECTION("uniform times uniform is uniform") {
    const std::vector<DensityFn> d{[](std::span<const double>) { return 1.0; },
                                   [](std::span<const double>) { return 3.0; }};
    const auto p = grid_product(d, {{0.0}, {2.0}, 512});
    const auto& g = std::get<Grid>(p.representation());
    for (double v : g.values) CHECK(v == Catch::Approx(0.5).epsilon(1e-12));
  }
  SECTION("tilted standard normal") {
    const std::vector<DensityFn> d{[](std::span<const double> x) { return normal_pdf(x[0], 0.0, 1.0); },
                                   [](std::span<const double> x) { return std::exp(x[0]); }};
    const auto p = grid_product(d, {{-8.0}, {10.0}, 4096});
    CHECK(std::abs(p.mean()(0) - 1.0) <= 1e-3);
    CHECK(std::abs(p.covariance()(0, 0) - 1.0) <= 1e-3);
  }
  SECTION("disjoint indicators") {
    const std::vector<DensityFn> d{[](std::span<const double> x) { return x[0] < 0.0 ? 1.0 : 0.0; },
                                   [](std::span<const double> x) { return x[0] > 0.5 ? 1.0 : 0.0; }};
    CHECK(kind_of([&] { grid_product(d, {{-1.0}, {1.0}, 512}); }) == ErrorKind::kDegenerateProduct);
  }
  SECTION("resolution floor") {
    const std::vector<DensityFn> d{[](std::span<const double>) { return 1.0; }};
    CHECK(kind_of([&] { grid_product(d, {{0.0}, {1.0}, 100}); }) == ErrorKind::kInvalidArgument);
  }
  SECTION("values integrate to one") {
    const std::vector<DensityFn> d{[](std::span<const double> x) { return bimodal(x[0]); },
                                   [](std::span<const double> x) { return bimodal(x[0]); }};
    const auto p = grid_product(d, {{-6.0}, {6.0}, 2048});
    const auto& g = std::get<Grid>(p.representation());
    double total = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double w = (i == 0 || i + 1 == g.values.size()) ? 0.5 : 1.0;
      total += w * g.values[i] * g.cell_volume;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
    CHECK(p.mean()(0) == Catch::Approx(0.0).margin(1e-9));
    CHECK(p.mass([](std::span<const double> x) { return x[0] > 0.0; }) == Catch::Approx(0.5).margin(1e-3));
  }
}

TEST_CASE("closed forms and quadrature agree") {
  SECTION("1D") {
    const std::vector<Gaussian> f{g1(0.0, 1.0), g1(2.0, 1.0)};
    const auto exact = gaussian_product(f);
    const std::vector<DensityFn> d{[](std::span<const double> x) { return normal_pdf(x[0], 0.0, 1.0); },
                                   [](std::span<const double> x) { return normal_pdf(x[0], 2.0, 1.0); }};
    const auto grid = grid_product(d, {{-8.0}, {10.0}, 2048});
    CHECK(grid_tv(grid, [&](const Eigen::VectorXd& x) { return exact.pdf(std::span<const double>(x.data(), 1)); }) <=
          1e-6);
  }
  SECTION("2D") {
    Eigen::MatrixXd a(2, 2), b(2, 2);
    a << 1.0, 0.3, 0.3, 0.8;
    b << 0.6, -0.2, -0.2, 1.2;
    const std::vector<Gaussian> f{{vec({0.5, -0.5}), a}, {vec({-1.0, 1.0}), b}};
    const auto exact = gaussian_product(f);
    const std::vector<DensityFn> d{[&](std::span<const double> x) { return gaussian_pdf(f[0], x); },
                                   [&](std::span<const double> x) { return gaussian_pdf(f[1], x); }};
    const auto grid = grid_product(d, {{-6.0, -6.0}, {6.0, 6.0}, 512});
    CHECK(grid_tv(grid, [&](const Eigen::VectorXd& x) { return exact.pdf(std::span<const double>(x.data(), 2)); }) <=
          1e-6);
  }
}

TEST_CASE("rejection sampling") {
  RngHandle rng(17, 0);
  const Proposal wide{[](RngHandle& r) { return std::sqrt(2.0) * r.normal(); },
                      [](double x) { return normal_pdf(x, 0.0, 2.0); }};
  SECTION("target equal to the proposal") {
    const auto r = rejection_sample([](double x) { return normal_pdf(x, 0.0, 2.0); }, wide, 1.0, 1000, rng);
    CHECK(r.acceptance_rate == 1.0);
    CHECK(r.samples.size() == 1000);
  }
  SECTION("N(1, 0.5) from N(0, 2)") {
    const auto target = [](double x) { return normal_pdf(x, 1.0, 0.5); };
    const auto r = rejection_sample(target, wide, 3.0, 100000, rng);
    double mean = 0.0;
    for (double x : r.samples) mean += x / r.samples.size();
    CHECK(std::abs(mean - 1.0) <= 0.01);
    CHECK(r.acceptance_rate == Catch::Approx(1.0 / 3.0).margin(0.01));
  }
  SECTION("agrees with quadrature on the bimodal product") {
    const Proposal broad{[](RngHandle& r) { return 3.0 * r.normal(); }, [](double x) { return normal_pdf(x, 0.0, 9.0); }};
    const auto target = [](double x) { return bimodal(x) * bimodal(x); };
    const auto r = rejection_sample(target, broad, 3.0, 100000, rng);
    const std::vector<DensityFn> d{[](std::span<const double> x) { return bimodal(x[0]); },
                                   [](std::span<const double> x) { return bimodal(x[0]); }};
    const auto grid = grid_product(d, {{-6.0}, {6.0}, 4096});
    CHECK(tv_distance(r.samples, grid, 100) <= 0.02);
  }
  SECTION("envelope violation") {
    const auto target = [](double x) { return normal_pdf(x, 0.0, 1.0); };
    CHECK(kind_of([&] { rejection_sample(target, wide, 1.0, 10, rng); }) == ErrorKind::kInvalidEnvelope);
  }
}

TEST_CASE("total variation") {
  SECTION("tables") {
    const std::vector<double> p{0.2, 0.3, 0.5};
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(tv_distance(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) == 1.0);
    CHECK(tv_distance(p, std::vector<double>{0.3, 0.3, 0.4}) == Catch::Approx(0.1));
  }
  SECTION("states against a table") {
    const auto exact = ExactDensity::table({1.0, 1.0, 2.0});
    const std::vector<std::size_t> states{0, 1, 2, 2};
    CHECK(tv_distance(states, exact) == Catch::Approx(0.0).margin(1e-15));
    const std::vector<std::size_t> point{0, 0};
    CHECK(tv_distance(point, exact) == Catch::Approx(0.75));
  }
  SECTION("exact normal draws on 100 bins") {
    RngHandle rng(4, 0);
    std::vector<double> draws(100000);
    for (double& x : draws) x = rng.normal();
    const auto exact = ExactDensity::gaussian(vec({0.0}), Eigen::MatrixXd::Identity(1, 1));
    CHECK(tv_distance(draws, exact, 100) <= 0.02);
  }
  SECTION("disjoint samples") {
    const std::vector<double> far(1000, 50.0);
    CHECK(tv_distance(far, ExactDensity::gaussian(vec({0.0}), Eigen::MatrixXd::Identity(1, 1)), 10) ==
          Catch::Approx(0.9).margin(1e-12));
  }
}

TEST_CASE("exact densities") {
  SECTION("table normalization") {
    const auto t = ExactDensity::table({2.0, 6.0});
    CHECK(std::get<Table>(t.representation()).probs == std::vector<double>{0.25, 0.75});
    CHECK(t.normalizer() == 8.0);
    CHECK(kind_of([] { ExactDensity::table({0.0, 0.0}); }) == ErrorKind::kDegenerateProduct);
    CHECK(kind_of([] { ExactDensity::table({1.0, -1.0}); }) == ErrorKind::kInvalidArgument);
  }
  SECTION("mixture moments and quantiles") {
    const auto m = ExactDensity::mixture({0.25, 0.75}, {g1(-2.0, 0.25), g1(2.0, 0.25)});
    CHECK(m.mean()(0) == Catch::Approx(1.0));
    CHECK(m.covariance()(0, 0) == Catch::Approx(3.25).margin(1e-9));
    CHECK(m.cdf(m.quantile(0.3)) == Catch::Approx(0.3).margin(1e-9));
    const double tail = 0.5 * std::erfc(4.0 / std::sqrt(2.0));
    CHECK(m.mass([](std::span<const double> x) { return x[0] < 0.0; }) == Catch::Approx(0.25 + 0.5 * tail).margin(1e-8));
  }
  SECTION("grid CSV export") {
    const std::vector<DensityFn> d{[](std::span<const double>) { return 1.0; }};
    const auto p = grid_product(d, {{0.0}, {1.0}, 512});
    std::ostringstream out;
    p.write_csv(out);
    std::size_t rows = 0;
    for (char c : out.str()) rows += c == '\n';
    CHECK(rows >= 512);
  }
}
