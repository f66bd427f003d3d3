#include "poe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "poe/errors.hpp"

namespace poe::oracle {
namespace {

constexpr double kNormalizationTolerance = 1e-9;

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) fail(ErrorKind::kInvalidArgument, "covariance must be square");
  if (!cov.allFinite() || (cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    fail(ErrorKind::kInvalidArgument, "covariance must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) fail(ErrorKind::kInvalidArgument, "covariance is not positive definite");
  return llt;
}

void check_gaussian(const Gaussian& g) {
  checked_llt(g.cov);
  if (g.mean.size() != g.cov.rows()) fail(ErrorKind::kInvalidArgument, "mean and covariance sizes differ");
}

// Trapezoid weight of node k on an axis with n nodes and spacing h.
double trapezoid_weight(const std::vector<double>& axis, std::size_t k) {
  const double h = (axis.back() - axis.front()) / static_cast<double>(axis.size() - 1);
  return (k == 0 || k + 1 == axis.size()) ? 0.5 * h : h;
}

std::vector<double> cell_masses(const Grid& g) {
  std::vector<double> mass(g.values.size());
  if (g.dim() == 1) {
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] = g.values[i] * trapezoid_weight(g.axes[0], i);
  } else {
    const std::size_t n1 = g.axes[1].size();
    for (std::size_t i = 0; i < mass.size(); ++i) {
      mass[i] = g.values[i] * trapezoid_weight(g.axes[0], i / n1) * trapezoid_weight(g.axes[1], i % n1);
    }
  }
  return mass;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Integral of a piecewise-linear 1D grid density up to x.
double grid_cdf(const Grid& g, double x) {
  const auto& a = g.axes[0];
  if (x <= a.front()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    const double h = a[i + 1] - a[i];
    if (x >= a[i + 1]) {
      acc += 0.5 * h * (g.values[i] + g.values[i + 1]);
      continue;
    }
    const double s = x - a[i];
    const double slope = (g.values[i + 1] - g.values[i]) / h;
    acc += s * g.values[i] + 0.5 * slope * s * s;
    return acc;
  }
  return std::min(acc, 1.0);
}

}  // namespace

Eigen::VectorXd Grid::point(std::size_t flat_index) const {
  if (dim() == 1) return Eigen::VectorXd::Constant(1, axes[0].at(flat_index));
  const std::size_t n1 = axes[1].size();
  Eigen::VectorXd p(2);
  p << axes[0].at(flat_index / n1), axes[1].at(flat_index % n1);
  return p;
}

ExactDensity::ExactDensity(Representation rep, double normalizer) : rep_(std::move(rep)), normalizer_(normalizer) {}

ExactDensity ExactDensity::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  Gaussian g{std::move(mean), std::move(cov)};
  check_gaussian(g);
  return ExactDensity(std::move(g), 1.0);
}

ExactDensity ExactDensity::mixture(std::vector<double> weights, std::vector<Gaussian> components) {
  if (weights.empty() || weights.size() != components.size()) {
    fail(ErrorKind::kInvalidArgument, "mixture needs one weight per component");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::kInvalidArgument, "mixture weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > kNormalizationTolerance) fail(ErrorKind::kInvalidArgument, "mixture weights must sum to 1");
  for (const auto& c : components) {
    check_gaussian(c);
    if (c.mean.size() != components.front().mean.size()) {
      fail(ErrorKind::kInvalidArgument, "mixture components differ in dimension");
    }
  }
  return ExactDensity(Mixture{std::move(weights), std::move(components)}, 1.0);
}

ExactDensity ExactDensity::grid(Grid grid, double normalizer) {
  if (grid.dim() < 1 || grid.dim() > 2) fail(ErrorKind::kInvalidArgument, "grids support one or two dimensions");
  std::size_t count = 1;
  for (const auto& axis : grid.axes) {
    if (axis.size() < 2) fail(ErrorKind::kInvalidArgument, "grid axes need at least two points");
    count *= axis.size();
  }
  if (grid.values.size() != count) fail(ErrorKind::kInvalidArgument, "grid values do not match the axes");
  for (double v : grid.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "grid values must be nonnegative");
  }
  const auto mass = cell_masses(grid);
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    fail(ErrorKind::kInvalidArgument, "grid density integrates to " + std::to_string(total) + ", not 1");
  }
  grid.cell_volume = 1.0;
  for (const auto& axis : grid.axes) grid.cell_volume *= (axis.back() - axis.front()) / static_cast<double>(axis.size() - 1);
  return ExactDensity(std::move(grid), normalizer);
}

ExactDensity ExactDensity::table(std::vector<double> unnormalized) {
  if (unnormalized.empty()) fail(ErrorKind::kInvalidArgument, "empty probability table");
  double total = 0.0;
  for (double v : unnormalized) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "table entries must be nonnegative");
    total += v;
  }
  if (!(total > 0.0)) fail(ErrorKind::kDegenerateProduct, "probability table has no mass");
  for (double& v : unnormalized) v /= total;
  return ExactDensity(Table{std::move(unnormalized)}, total);
}

std::size_t ExactDensity::dim() const {
  return std::visit(
      [](const auto& r) -> std::size_t {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Gaussian>) return static_cast<std::size_t>(r.mean.size());
        else if constexpr (std::is_same_v<T, Mixture>) return static_cast<std::size_t>(r.components.front().mean.size());
        else if constexpr (std::is_same_v<T, Grid>) return r.dim();
        else return 1;
      },
      rep_);
}

double gaussian_pdf(const Gaussian& g, std::span<const double> x) {
  const auto d = g.mean.size();
  if (static_cast<Eigen::Index>(x.size()) != d) fail(ErrorKind::kInvalidArgument, "point has the wrong dimension");
  const auto llt = checked_llt(g.cov);
  const Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(x.data(), d) - g.mean;
  const Eigen::VectorXd z = llt.matrixL().solve(diff);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::exp(-0.5 * z.squaredNorm() - 0.5 * log_det - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
}

double ExactDensity::pdf(std::span<const double> x) const {
  if (const auto* g = std::get_if<Gaussian>(&rep_)) return gaussian_pdf(*g, x);
  if (const auto* m = std::get_if<Mixture>(&rep_)) {
    double p = 0.0;
    for (std::size_t k = 0; k < m->weights.size(); ++k) p += m->weights[k] * gaussian_pdf(m->components[k], x);
    return p;
  }
  if (const auto* g = std::get_if<Grid>(&rep_)) {
    if (x.size() != g->dim()) fail(ErrorKind::kInvalidArgument, "point has the wrong dimension");
    // Multilinear interpolation between grid nodes.
    std::size_t lo[2] = {0, 0};
    double frac[2] = {0.0, 0.0};
    for (std::size_t d = 0; d < g->dim(); ++d) {
      const auto& a = g->axes[d];
      if (x[d] < a.front() || x[d] > a.back()) return 0.0;
      const double h = (a.back() - a.front()) / static_cast<double>(a.size() - 1);
      const double pos = (x[d] - a.front()) / h;
      lo[d] = std::min(static_cast<std::size_t>(pos), a.size() - 2);
      frac[d] = pos - static_cast<double>(lo[d]);
    }
    if (g->dim() == 1) return (1.0 - frac[0]) * g->values[lo[0]] + frac[0] * g->values[lo[0] + 1];
    const std::size_t n1 = g->axes[1].size();
    const auto at = [&](std::size_t i, std::size_t j) { return g->values[i * n1 + j]; };
    return (1.0 - frac[0]) * ((1.0 - frac[1]) * at(lo[0], lo[1]) + frac[1] * at(lo[0], lo[1] + 1)) +
           frac[0] * ((1.0 - frac[1]) * at(lo[0] + 1, lo[1]) + frac[1] * at(lo[0] + 1, lo[1] + 1));
  }
  fail(ErrorKind::kInvalidArgument, "pdf is undefined for probability tables");
}

double ExactDensity::cdf(double x) const {
  if (dim() != 1 || std::holds_alternative<Table>(rep_)) {
    fail(ErrorKind::kInvalidArgument, "cdf needs a one-dimensional continuous density");
  }
  if (const auto* g = std::get_if<Gaussian>(&rep_)) return normal_cdf((x - g->mean[0]) / std::sqrt(g->cov(0, 0)));
  if (const auto* m = std::get_if<Mixture>(&rep_)) {
    double c = 0.0;
    for (std::size_t k = 0; k < m->weights.size(); ++k) {
      const auto& comp = m->components[k];
      c += m->weights[k] * normal_cdf((x - comp.mean[0]) / std::sqrt(comp.cov(0, 0)));
    }
    return c;
  }
  return grid_cdf(std::get<Grid>(rep_), x);
}

double ExactDensity::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::kInvalidArgument, "quantile level must lie in (0, 1)");
  double lo = 0.0;
  double hi = 0.0;
  if (const auto* g = std::get_if<Grid>(&rep_)) {
    lo = g->axes[0].front();
    hi = g->axes[0].back();
  } else {
    const double m = mean()[0];
    const double s = std::sqrt(covariance()(0, 0));
    lo = m - 40.0 * s;
    hi = m + 40.0 * s;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::VectorXd ExactDensity::mean() const {
  if (const auto* g = std::get_if<Gaussian>(&rep_)) return g->mean;
  if (const auto* m = std::get_if<Mixture>(&rep_)) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m->components.front().mean.size());
    for (std::size_t k = 0; k < m->weights.size(); ++k) mu += m->weights[k] * m->components[k].mean;
    return mu;
  }
  if (const auto* g = std::get_if<Grid>(&rep_)) {
    const auto mass = cell_masses(*g);
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g->dim()));
    for (std::size_t i = 0; i < mass.size(); ++i) mu += mass[i] * g->point(i);
    return mu / total;
  }
  const auto& t = std::get<Table>(rep_);
  double mu = 0.0;
  for (std::size_t i = 0; i < t.probs.size(); ++i) mu += static_cast<double>(i) * t.probs[i];
  return Eigen::VectorXd::Constant(1, mu);
}

Eigen::MatrixXd ExactDensity::covariance() const {
  if (const auto* g = std::get_if<Gaussian>(&rep_)) return g->cov;
  const Eigen::VectorXd mu = mean();
  if (const auto* m = std::get_if<Mixture>(&rep_)) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(mu.size(), mu.size());
    for (std::size_t k = 0; k < m->weights.size(); ++k) {
      const Eigen::VectorXd d = m->components[k].mean - mu;
      cov += m->weights[k] * (m->components[k].cov + d * d.transpose());
    }
    return cov;
  }
  if (const auto* g = std::get_if<Grid>(&rep_)) {
    const auto mass = cell_masses(*g);
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(mu.size(), mu.size());
    for (std::size_t i = 0; i < mass.size(); ++i) {
      const Eigen::VectorXd d = g->point(i) - mu;
      cov += mass[i] * d * d.transpose();
    }
    return cov / total;
  }
  const auto& t = std::get<Table>(rep_);
  double var = 0.0;
  for (std::size_t i = 0; i < t.probs.size(); ++i) var += t.probs[i] * std::pow(static_cast<double>(i) - mu[0], 2);
  return Eigen::MatrixXd::Constant(1, 1, var);
}

double ExactDensity::mass(const std::function<bool(std::span<const double>)>& pred, std::size_t grid_points) const {
  if (const auto* t = std::get_if<Table>(&rep_)) {
    double m = 0.0;
    for (std::size_t i = 0; i < t->probs.size(); ++i) {
      const double x = static_cast<double>(i);
      if (pred(std::span<const double>(&x, 1))) m += t->probs[i];
    }
    return m;
  }
  if (const auto* g = std::get_if<Grid>(&rep_)) {
    const auto cells = cell_masses(*g);
    double m = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Eigen::VectorXd p = g->point(i);
      if (pred(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())))) m += cells[i];
    }
    return m;
  }
  if (dim() != 1) fail(ErrorKind::kInvalidArgument, "closed-form mass integration is one-dimensional");
  if (grid_points < 2) fail(ErrorKind::kInvalidArgument, "mass integration needs at least two cells");
  // Midpoint rule over +-12 standard deviations of every component.
  double lo = 0.0;
  double hi = 0.0;
  if (const auto* gs = std::get_if<Gaussian>(&rep_)) {
    const double s = std::sqrt(gs->cov(0, 0));
    lo = gs->mean[0] - 12.0 * s;
    hi = gs->mean[0] + 12.0 * s;
  } else {
    const auto& m = std::get<Mixture>(rep_);
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const auto& c : m.components) {
      const double s = std::sqrt(c.cov(0, 0));
      lo = std::min(lo, c.mean[0] - 12.0 * s);
      hi = std::max(hi, c.mean[0] + 12.0 * s);
    }
  }
  const double h = (hi - lo) / static_cast<double>(grid_points);
  double m = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double x = lo + (static_cast<double>(i) + 0.5) * h;
    const std::span<const double> xs(&x, 1);
    if (pred(xs)) m += pdf(xs) * h;
  }
  return m;
}

void ExactDensity::write_csv(std::ostream& out) const {
  out.precision(17);
  if (const auto* t = std::get_if<Table>(&rep_)) {
    out << "index,probability\n";
    for (std::size_t i = 0; i < t->probs.size(); ++i) out << i << ',' << t->probs[i] << '\n';
    return;
  }
  const auto* g = std::get_if<Grid>(&rep_);
  if (!g) fail(ErrorKind::kInvalidArgument, "only grids and tables export to CSV");
  out << (g->dim() == 1 ? "x,density\n" : "x,y,density\n");
  for (std::size_t i = 0; i < g->values.size(); ++i) {
    const Eigen::VectorXd p = g->point(i);
    for (Eigen::Index d = 0; d < p.size(); ++d) out << p[d] << ',';
    out << g->values[i] << '\n';
  }
}

ExactDensity gaussian_product(std::span<const Gaussian> factors) {
  if (factors.empty()) fail(ErrorKind::kInvalidArgument, "Gaussian product needs at least one factor");
  const Eigen::Index d = factors.front().mean.size();
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(d);
  for (const auto& f : factors) {
    check_gaussian(f);
    if (f.mean.size() != d) fail(ErrorKind::kInvalidArgument, "Gaussian factors differ in dimension");
    const auto llt = checked_llt(f.cov);
    const Eigen::MatrixXd p = llt.solve(Eigen::MatrixXd::Identity(d, d));
    precision += p;
    shift += p * f.mean;
  }
  Eigen::MatrixXd cov = precision.inverse();
  cov = 0.5 * (cov + cov.transpose());
  return ExactDensity::gaussian(cov * shift, cov);
}

ExactDensity tilted_gaussian(const Gaussian& base, const Eigen::VectorXd& a) {
  check_gaussian(base);
  if (a.size() != base.mean.size()) fail(ErrorKind::kInvalidArgument, "tilt has the wrong dimension");
  return ExactDensity::gaussian(base.mean + base.cov * a, base.cov);
}

ExactDensity grid_product(std::span<const DensityFn> densities, const GridSpec& spec) {
  if (densities.empty()) fail(ErrorKind::kInvalidArgument, "grid product needs at least one density");
  const std::size_t d = spec.lower.size();
  if (d < 1 || d > 2 || spec.upper.size() != d) fail(ErrorKind::kInvalidArgument, "grid products are 1D or 2D");
  if (spec.points < 512) fail(ErrorKind::kInvalidArgument, "grid resolution must be >= 512 points per dimension");
  Grid grid;
  for (std::size_t k = 0; k < d; ++k) {
    if (!(spec.upper[k] > spec.lower[k])) fail(ErrorKind::kInvalidArgument, "grid bounds must be increasing");
    grid.axes.push_back(linspace(spec.lower[k], spec.upper[k], spec.points));
  }
  const std::size_t count = d == 1 ? spec.points : spec.points * spec.points;
  grid.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd p = grid.point(i);
    const std::span<const double> xs(p.data(), static_cast<std::size_t>(p.size()));
    double v = 1.0;
    for (const auto& f : densities) v *= f(xs);
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "densities must be finite and nonnegative");
    grid.values[i] = v;
  }
  const auto mass = cell_masses(grid);
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) fail(ErrorKind::kDegenerateProduct, "product of densities has zero mass on the grid");
  for (double& v : grid.values) v /= total;
  return ExactDensity::grid(std::move(grid), total);
}

RejectionResult rejection_sample(const std::function<double(double)>& target, const Proposal& proposal,
                                 double envelope, std::size_t n, RngHandle& rng) {
  if (!(envelope > 0.0) || !std::isfinite(envelope)) fail(ErrorKind::kInvalidEnvelope, "envelope must be positive");
  constexpr std::size_t kProbes = 4096;
  for (std::size_t i = 0; i < kProbes; ++i) {
    const double x = proposal.probe_lower + (proposal.probe_upper - proposal.probe_lower) * static_cast<double>(i) /
                                                static_cast<double>(kProbes - 1);
    const double bound = envelope * proposal.pdf(x);
    if (target(x) > bound * (1.0 + 1e-12)) {
      fail(ErrorKind::kInvalidEnvelope, "target exceeds the envelope at x = " + std::to_string(x));
    }
  }
  RejectionResult result;
  result.samples.reserve(n);
  std::size_t attempts = 0;
  const std::size_t max_attempts = std::max<std::size_t>(n, 1) * 1'000'000;
  while (result.samples.size() < n) {
    if (++attempts > max_attempts) fail(ErrorKind::kInvalidEnvelope, "rejection sampler accepts almost nothing");
    const double x = proposal.sample(rng);
    const double u = rng.uniform();
    if (u * envelope * proposal.pdf(x) < target(x)) result.samples.push_back(x);
  }
  result.acceptance_rate = n == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(attempts);
  return result;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorKind::kInvalidArgument, "tables differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

double tv_distance(std::span<const std::size_t> states, const ExactDensity& exact) {
  const auto* t = std::get_if<Table>(&exact.representation());
  if (!t) fail(ErrorKind::kInvalidArgument, "state TV needs a probability table");
  if (states.empty()) fail(ErrorKind::kInvalidArgument, "no states to compare");
  std::vector<double> empirical(t->probs.size(), 0.0);
  const double unit = 1.0 / static_cast<double>(states.size());
  for (std::size_t s : states) {
    if (s >= empirical.size()) fail(ErrorKind::kInvalidArgument, "state index outside the table");
    empirical[s] += unit;
  }
  return tv_distance(empirical, t->probs);
}

double tv_distance(std::span<const double> samples, const ExactDensity& exact, std::size_t bins,
                   std::span<const double> weights) {
  if (samples.empty() || bins < 2) fail(ErrorKind::kInvalidArgument, "binned TV needs samples and >= 2 bins");
  if (!weights.empty() && weights.size() != samples.size()) {
    fail(ErrorKind::kInvalidArgument, "one weight per sample required");
  }
  std::vector<double> edges;
  edges.reserve(bins - 1);
  for (std::size_t k = 1; k < bins; ++k) edges.push_back(exact.quantile(static_cast<double>(k) / static_cast<double>(bins)));
  std::vector<double> counts(bins, 0.0);
  const double unit = 1.0 / static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto bin = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), samples[i]) - edges.begin());
    counts[bin] += weights.empty() ? unit : weights[i];
  }
  double acc = 0.0;
  for (double c : counts) acc += std::abs(c - 1.0 / static_cast<double>(bins));
  return 0.5 * acc;
}

}  // namespace poe::oracle
