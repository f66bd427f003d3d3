#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "poe/sample.hpp"
#include "poe/schedule.hpp"

namespace poe {

// ---------------------------------------------------------------------------
// Flow experts
// ---------------------------------------------------------------------------

/// A generative expert defined by the velocity field of a Gaussian
/// probability path. Experts live on their own (regional) coordinates; the
/// product maps them into the full state.
///
/// The velocity is the only required primitive. Analytic experts also expose
/// their Jacobian, marginal log density, exact score and posterior mean so
/// tests and MALA can use them.
class FlowExpert {
 public:
  virtual ~FlowExpert() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Eigen::VectorXd velocity(const Eigen::VectorXd& x, const PathPoint& point) const = 0;

  virtual std::optional<Eigen::MatrixXd> velocity_jacobian(const Eigen::VectorXd& x, const PathPoint& point) const;
  virtual std::optional<double> log_density(const Eigen::VectorXd& x, const PathPoint& point) const;
  virtual std::optional<Eigen::VectorXd> exact_score(const Eigen::VectorXd& x, const PathPoint& point) const;
  virtual std::optional<Eigen::VectorXd> posterior_mean(const Eigen::VectorXd& x, const PathPoint& point) const;
};

using FlowExpertPtr = std::shared_ptr<const FlowExpert>;

/// Gaussian data N(mean, cov). Marginal at a path point is
/// N(alpha mean, alpha^2 cov + sigma^2 I) and the velocity is
///   alpha_dot mean + (alpha_dot alpha cov + sigma_dot sigma I) S^-1 (x - alpha mean).
class GaussianFlowExpert final : public FlowExpert {
 public:
  GaussianFlowExpert(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  Eigen::Index dim() const override { return mean_.size(); }
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<Eigen::MatrixXd> velocity_jacobian(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<double> log_density(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<Eigen::VectorXd> exact_score(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<Eigen::VectorXd> posterior_mean(const Eigen::VectorXd& x, const PathPoint& point) const override;

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& cov() const noexcept { return cov_; }

  /// Marginal mean and covariance at a path point.
  Eigen::VectorXd marginal_mean(const PathPoint& point) const;
  Eigen::MatrixXd marginal_cov(const PathPoint& point) const;

  // Quantities shared with the mixture expert. `point` must have a
  // nonsingular marginal covariance.
  Eigen::MatrixXd drift_matrix(const PathPoint& point) const;      // d v / d x
  Eigen::MatrixXd marginal_precision(const PathPoint& point) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd basis_;         // eigenvectors of cov
  Eigen::VectorXd eigenvalues_;   // eigenvalues of cov, all > 0
};

/// Gaussian mixture data. The velocity is the responsibility-weighted sum
/// of the component velocities.
class GmmFlowExpert final : public FlowExpert {
 public:
  GmmFlowExpert(std::vector<double> weights, std::vector<GaussianFlowExpert> components);

  Eigen::Index dim() const override { return components_.front().dim(); }
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<Eigen::MatrixXd> velocity_jacobian(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<double> log_density(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<Eigen::VectorXd> exact_score(const Eigen::VectorXd& x, const PathPoint& point) const override;
  std::optional<Eigen::VectorXd> posterior_mean(const Eigen::VectorXd& x, const PathPoint& point) const override;

  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<GaussianFlowExpert>& components() const noexcept { return components_; }

  /// Posterior component probabilities at x.
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& x, const PathPoint& point) const;

 private:
  std::vector<double> weights_;
  std::vector<GaussianFlowExpert> components_;
};

/// Black-box velocity field, e.g. a trained network behind a callable.
/// Receives the regional state, the remapped time and the expert context.
using VelocityCallable =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, double time, std::span<const double> context)>;

class CallableFlowExpert final : public FlowExpert {
 public:
  CallableFlowExpert(Eigen::Index dim, VelocityCallable velocity, std::vector<double> context = {});

  Eigen::Index dim() const override { return dim_; }
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, const PathPoint& point) const override;

 private:
  Eigen::Index dim_;
  VelocityCallable velocity_;
  std::vector<double> context_;
};

FlowExpertPtr gaussian_flow_expert(Eigen::VectorXd mean, Eigen::MatrixXd cov);
FlowExpertPtr gmm_flow_expert(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                              std::vector<Eigen::MatrixXd> covs);

// ---------------------------------------------------------------------------
// Autoregressive experts
// ---------------------------------------------------------------------------

/// A generative expert over discrete sequences, given by its next-slice
/// conditionals.
class ArExpert {
 public:
  virtual ~ArExpert() = default;

  virtual const SliceGeometry& geometry() const = 0;

  /// Distribution of the next slice given the codes of the filled prefix.
  /// Length slice_values(), nonnegative, sums to one.
  virtual std::vector<double> conditional(std::span<const std::size_t> prefix) const = 0;

  /// One entry of conditional(prefix).
  virtual double conditional_probability(std::span<const std::size_t> prefix, std::size_t code) const;

  /// Probability of the complete or partial sequence given by its codes,
  /// i.e. the prefix marginal for partial sequences.
  double joint_probability(std::span<const std::size_t> codes) const;
};

using ArExpertPtr = std::shared_ptr<const ArExpert>;

inline constexpr double kTableTolerance = 1e-12;

/// Explicit tables for every prefix. `levels[k]` holds the conditionals of
/// slice k for all slice_values()^k prefixes, row-major: row r (prefix code
/// r in base slice_values(), most significant slice first) spans entries
/// [r * S, (r + 1) * S).
class TabularArExpert final : public ArExpert {
 public:
  TabularArExpert(SliceGeometry geometry, std::vector<std::vector<double>> levels);

  const SliceGeometry& geometry() const override { return geometry_; }
  std::vector<double> conditional(std::span<const std::size_t> prefix) const override;
  double conditional_probability(std::span<const std::size_t> prefix, std::size_t code) const override;
  std::span<const double> row(std::span<const std::size_t> prefix) const;

  const std::vector<std::vector<double>>& levels() const noexcept { return levels_; }

 private:
  SliceGeometry geometry_;
  std::vector<std::vector<double>> levels_;
};

/// Largest state count for which tabular experts are accepted.
inline constexpr std::size_t kMaxEnumeratedStates = 10'000'000;

std::shared_ptr<const TabularArExpert> tabular_ar_expert(SliceGeometry geometry,
                                                         std::vector<std::vector<double>> levels);

/// Tables drawn from a symmetric Dirichlet(concentration) per prefix.
/// Small concentrations give peaked conditionals.
std::shared_ptr<const TabularArExpert> random_tabular_ar_expert(SliceGeometry geometry, double concentration,
                                                                std::uint64_t seed);

/// First-order Markov chain over slices: an initial distribution and one
/// transition matrix, each row Dirichlet(concentration), expanded to full
/// prefix tables.
std::shared_ptr<const TabularArExpert> random_markov_ar_expert(SliceGeometry geometry, double concentration,
                                                               std::uint64_t seed);

std::shared_ptr<const TabularArExpert> uniform_ar_expert(SliceGeometry geometry);

// ---------------------------------------------------------------------------
// Reward experts
// ---------------------------------------------------------------------------

/// Discriminative expert in log space: q(x) = exp(r(x)). Operates on the
/// flattened state. May return -infinity for hard constraints.
struct RewardExpert {
  std::string name;
  std::function<double(std::span<const double>)> log_reward;

  double operator()(std::span<const double> x) const { return log_reward(x); }
};

using RegionPredicate = std::function<bool(std::span<const double>)>;

/// r(x) = a^T x.
RewardExpert linear_reward(Eigen::VectorXd a, std::string name = "linear");
/// r(x) = -x^T A x + b^T x.
RewardExpert quadratic_reward(Eigen::MatrixXd A, Eigen::VectorXd b, std::string name = "quadratic");
/// r(x) = sharpness * 1[pred(x)]. With `hard`, r = 0 inside and -inf outside.
RewardExpert region_indicator_reward(RegionPredicate predicate, double sharpness, bool hard = false,
                                     std::string name = "indicator");

/// normal^T x > offset.
RegionPredicate halfspace(Eigen::VectorXd normal, double offset);

double total_reward(std::span<const RewardExpert> rewards, std::span<const double> x);

}  // namespace poe
