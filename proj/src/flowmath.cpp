#include "poe/flowmath.hpp"

#include <cmath>
#include <string>

#include "poe/errors.hpp"

namespace poe {
namespace {

std::string describe(const PathPoint& p) {
  return "time " + std::to_string(p.time) + " (alpha " + std::to_string(p.alpha) + ", sigma " +
         std::to_string(p.sigma) + ")";
}

double score_denominator(const PathPoint& p) {
  return p.sigma_dot * p.sigma * p.alpha - p.alpha_dot * p.sigma * p.sigma;
}

double endpoint_denominator(const PathPoint& p) { return p.alpha_dot * p.sigma - p.sigma_dot * p.alpha; }

void check_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + ": dimension mismatch " + std::to_string(a.size()) +
                                          " vs " + std::to_string(b.size()));
  }
}

}  // namespace

Eigen::VectorXd velocity_to_score(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                  const PathPoint& point) {
  check_same_size(velocity, x, "velocity_to_score");
  const double denom = score_denominator(point);
  if (std::abs(denom) < kSingularTolerance) {
    fail(ErrorKind::kSingularSchedule, "score conversion is singular at " + describe(point));
  }
  return (-point.alpha * velocity + point.alpha_dot * x) / denom;
}

Eigen::VectorXd velocity_to_score(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                  const AnnealSchedule& schedule, int step) {
  try {
    return velocity_to_score(velocity, x, schedule.point(step));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kSingularSchedule) throw;
    fail(ErrorKind::kSingularSchedule, "score conversion is singular at step t=" + std::to_string(step) + " (" +
                                           describe(schedule.point(step)) + ")");
  }
}

Eigen::VectorXd score_to_velocity(const Eigen::VectorXd& score, const Eigen::VectorXd& x, const PathPoint& point) {
  check_same_size(score, x, "score_to_velocity");
  if (std::abs(point.alpha) < kSingularTolerance) {
    fail(ErrorKind::kSingularSchedule, "velocity from score is singular at " + describe(point));
  }
  return (point.alpha_dot * x - score_denominator(point) * score) / point.alpha;
}

Eigen::VectorXd endpoint_predict(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                 const PathPoint& point) {
  check_same_size(velocity, x, "endpoint_predict");
  if (point.sigma == 0.0) return x;
  const double denom = endpoint_denominator(point);
  if (std::abs(denom) < kSingularTolerance) {
    fail(ErrorKind::kSingularSchedule, "endpoint prediction is singular at " + describe(point));
  }
  return (point.sigma / denom) * velocity - (point.sigma_dot / denom) * x;
}

Eigen::VectorXd endpoint_predict(const Eigen::VectorXd& velocity, const Eigen::VectorXd& x,
                                 const AnnealSchedule& schedule, int step) {
  return endpoint_predict(velocity, x, schedule.point(step));
}

ComposedField compose_fields(std::span<const ExpertField> fields) {
  if (fields.empty()) fail(ErrorKind::kInvalidComposition, "no expert fields to compose");
  const Eigen::Index dim = fields.front().velocity.size();
  const bool with_score = fields.front().score.size() != 0;

  Eigen::VectorXd weight_sum = Eigen::VectorXd::Zero(dim);
  ComposedField out{Eigen::VectorXd::Zero(dim), with_score ? Eigen::VectorXd::Zero(dim) : Eigen::VectorXd()};
  for (const auto& f : fields) {
    if (f.velocity.size() != dim || f.weight.size() != dim || (with_score && f.score.size() != dim)) {
      fail(ErrorKind::kInvalidComposition, "expert fields have mismatched dimensions");
    }
    weight_sum += f.weight;
    out.velocity += f.weight.cwiseProduct(f.velocity);
    if (with_score) out.score += f.weight.cwiseProduct(f.score);
  }
  const double deviation = (weight_sum.array() - 1.0).abs().maxCoeff();
  if (!(deviation <= kWeightSumTolerance)) {
    fail(ErrorKind::kInvalidComposition,
         "region weights must sum to 1 elementwise; max deviation " + std::to_string(deviation));
  }
  return out;
}

Eigen::VectorXd compose_product_score(std::span<const ExpertField> fields) {
  if (fields.empty()) fail(ErrorKind::kInvalidComposition, "no expert fields to compose");
  const Eigen::Index dim = fields.front().score.size();
  Eigen::VectorXd cover = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(dim);
  for (const auto& f : fields) {
    if (f.score.size() != dim || f.weight.size() != dim) {
      fail(ErrorKind::kInvalidComposition, "expert fields have mismatched dimensions");
    }
    cover += (f.weight.array() > 0.0).cast<double>().matrix();
    weighted += f.weight.cwiseProduct(f.score);
  }
  return cover.cwiseProduct(weighted);
}

Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& velocity, double delta) {
  check_same_size(velocity, x, "euler_step");
  return x + velocity * delta;
}

Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& velocity,
                           const AnnealSchedule& schedule, int step) {
  return euler_step(x, velocity, schedule.delta_into(step));
}

Eigen::VectorXd langevin_step(const Eigen::VectorXd& x, const Eigen::VectorXd& score, double kappa,
                              RngHandle& rng) {
  check_same_size(score, x, "langevin_step");
  if (!(kappa > 0.0)) fail(ErrorKind::kInvalidArgument, "Langevin scale kappa must be positive");
  return x + (0.5 * kappa * kappa) * score + kappa * rng.normal_vector(x.size());
}

Eigen::VectorXd mala_step(const Eigen::VectorXd& x, double kappa, const ScoreFn& score,
                          const LogDensityFn& log_density, RngHandle& rng, bool* accepted) {
  const double half_k2 = 0.5 * kappa * kappa;
  const Eigen::VectorXd score_x = score(x);
  const Eigen::VectorXd proposal = langevin_step(x, score_x, kappa, rng);
  const Eigen::VectorXd score_p = score(proposal);

  // log q(a | b) up to a constant for the Gaussian proposal centred at
  // b + (kappa^2 / 2) s(b).
  const auto log_q = [&](const Eigen::VectorXd& to, const Eigen::VectorXd& from, const Eigen::VectorXd& s_from) {
    return -(to - from - half_k2 * s_from).squaredNorm() / (2.0 * kappa * kappa);
  };
  const double log_ratio =
      log_density(proposal) - log_density(x) + log_q(x, proposal, score_p) - log_q(proposal, x, score_x);
  const bool accept = std::log(rng.uniform()) < log_ratio;
  if (accepted) *accepted = accept;
  return accept ? proposal : x;
}

}  // namespace poe
