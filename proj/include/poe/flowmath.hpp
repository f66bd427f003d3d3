#pragma once

#include <functional>
#include <span>

#include <Eigen/Core>

#include "poe/rng.hpp"
#include "poe/schedule.hpp"

namespace poe {

inline constexpr double kSingularTolerance = 1e-12;

/// Score of the path marginal recovered from a velocity prediction:
///   s = (-alpha v + alpha_dot x) / (sigma_dot sigma alpha - alpha_dot sigma^2).
/// Throws kSingularSchedule when the denominator vanishes (sigma = 0).
Eigen::VectorXd velocity_to_score(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                  const PathPoint& point);
Eigen::VectorXd velocity_to_score(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                  const AnnealSchedule& schedule, int step);

/// Inverse of velocity_to_score at a non-singular point.
Eigen::VectorXd score_to_velocity(const Eigen::VectorXd& score, const Eigen::VectorXd& x,
                                  const PathPoint& point);

/// Predicted clean endpoint:
///   x_hat = (sigma v - sigma_dot x) / (alpha_dot sigma - sigma_dot alpha).
/// At sigma = 0 the state already is the endpoint and is returned as is.
Eigen::VectorXd endpoint_predict(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                 const PathPoint& point);
Eigen::VectorXd endpoint_predict(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                 const AnnealSchedule& schedule, int step);

/// One expert's contribution, already padded to the full state dimension.
struct ExpertField {
  Eigen::VectorXd velocity;
  Eigen::VectorXd score;
  Eigen::VectorXd weight;  // region weight lambda, entries in [0, 1]
};

struct ComposedField {
  Eigen::VectorXd velocity;
  Eigen::VectorXd score;
};

inline constexpr double kWeightSumTolerance = 1e-9;

/// Region-weighted sums sum_i lambda_i * v_i and sum_i lambda_i * s_i.
/// Weights must sum to one elementwise; otherwise kInvalidComposition with
/// the largest deviation. `score` may be left empty in every field, in
/// which case the composed score is empty too.
ComposedField compose_fields(std::span<const ExpertField> fields);

/// Score of the product of the experts' marginals. Coordinate j receives
/// cover_j * sum_i lambda_i(j) s_i(j), where cover_j counts the experts with
/// nonzero weight at j. With the default weights (1 / cover) this is the
/// plain sum of the covering experts' scores.
Eigen::VectorXd compose_product_score(std::span<const ExpertField> fields);

/// Euler step of the probability-flow ODE: x + v * delta.
Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& velocity, double delta);

/// Transition into stage `step`: delta = xi(step) - xi(step + 1).
Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& velocity,
                           const AnnealSchedule& schedule, int step);

/// Unadjusted Langevin step x + (kappa^2 / 2) s + kappa * eps.
Eigen::VectorXd langevin_step(const Eigen::VectorXd& x, const Eigen::VectorXd& score, double kappa,
                              RngHandle& rng);

using ScoreFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

/// Metropolis-adjusted Langevin step. Proposes with langevin_step and
/// accepts with the MALA ratio under `log_density`.
Eigen::VectorXd mala_step(const Eigen::VectorXd& x, double kappa, const ScoreFn& score,
                          const LogDensityFn& log_density, RngHandle& rng, bool* accepted = nullptr);

}  // namespace poe
