#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "poe/rng.hpp"

// Ground-truth machinery for verification. Nothing here depends on the
// sampler modules; only Eigen and the RNG are shared.

namespace poe::oracle {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct Mixture {
  std::vector<double> weights;
  std::vector<Gaussian> components;
};

/// Tabulated density on a regular 1D or 2D grid. 2D values are row-major:
/// index = i0 * n1 + i1.
struct Grid {
  std::vector<std::vector<double>> axes;  // one axis per dimension
  std::vector<double> values;             // normalized density values
  double cell_volume = 0.0;

  std::size_t dim() const noexcept { return axes.size(); }
  Eigen::VectorXd point(std::size_t flat_index) const;
};

/// Normalized probability table over a finite state space.
struct Table {
  std::vector<double> probs;
};

/// An exact reference distribution.
class ExactDensity {
 public:
  using Representation = std::variant<Gaussian, Mixture, Grid, Table>;

  static ExactDensity gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);
  static ExactDensity mixture(std::vector<double> weights, std::vector<Gaussian> components);
  static ExactDensity grid(Grid grid, double normalizer);
  static ExactDensity table(std::vector<double> unnormalized);

  const Representation& representation() const noexcept { return rep_; }
  /// Mass or integral of the unnormalized input (1 for closed forms).
  double normalizer() const noexcept { return normalizer_; }
  std::size_t dim() const;

  /// Density at x (continuous kinds only).
  double pdf(std::span<const double> x) const;
  /// CDF of a 1D continuous density.
  double cdf(double x) const;
  /// Inverse CDF of a 1D continuous density (bisection on cdf).
  double quantile(double p) const;

  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;

  /// Probability of {x : pred(x)}. Grids and tables sum directly; 1D
  /// Gaussians and mixtures integrate over `grid_points` cells spanning
  /// +-12 standard deviations.
  double mass(const std::function<bool(std::span<const double>)>& pred, std::size_t grid_points = 8192) const;

  /// Writes "x[,y],density" rows for grids and "index,probability" for tables.
  void write_csv(std::ostream& out) const;

 private:
  ExactDensity(Representation rep, double normalizer);

  Representation rep_;
  double normalizer_ = 1.0;
};

double gaussian_pdf(const Gaussian& g, std::span<const double> x);

/// N(mu*, S*) with S* = (sum S_i^-1)^-1, mu* = S* sum S_i^-1 mu_i.
/// Throws kInvalidArgument on non-SPD covariances.
ExactDensity gaussian_product(std::span<const Gaussian> factors);

/// Gaussian N(mu, S) times exp(a^T x): N(mu + S a, S).
ExactDensity tilted_gaussian(const Gaussian& base, const Eigen::VectorXd& a);

struct GridSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t points = 1024;  // per dimension, >= 512
};

using DensityFn = std::function<double(std::span<const double>)>;

/// Pointwise product of (unnormalized) densities on a 1D or 2D grid,
/// normalized with the trapezoid rule. Throws kDegenerateProduct on zero
/// total mass.
ExactDensity grid_product(std::span<const DensityFn> densities, const GridSpec& spec);

struct Proposal {
  std::function<double(RngHandle&)> sample;
  std::function<double(double)> pdf;
  double probe_lower = -10.0;
  double probe_upper = 10.0;
};

struct RejectionResult {
  std::vector<double> samples;
  double acceptance_rate = 0.0;
};

/// Exact 1D rejection sampler: accept x ~ proposal with probability
/// target(x) / (M proposal(x)). The envelope is checked on 4096 probe
/// points; a violation throws kInvalidEnvelope.
RejectionResult rejection_sample(const std::function<double(double)>& target, const Proposal& proposal,
                                 double envelope, std::size_t n, RngHandle& rng);

/// Half L1 distance between two probability tables of equal length.
double tv_distance(std::span<const double> p, std::span<const double> q);

/// TV between the empirical distribution of state indices and a table.
double tv_distance(std::span<const std::size_t> states, const ExactDensity& exact);

/// TV between 1D samples and a 1D density over `bins` equal-mass bins of
/// the exact density. Optional sample weights must sum to one.
double tv_distance(std::span<const double> samples, const ExactDensity& exact, std::size_t bins,
                   std::span<const double> weights = {});

}  // namespace poe::oracle
