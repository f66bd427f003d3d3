#pragma once

#include <string_view>
#include <vector>

namespace poe {

/// Spacing of remapped times over the annealing steps.
enum class TimeGrid { kUniform, kCosine };

/// Interpolation pair (alpha, sigma) of the Gaussian probability path
/// x = alpha(s) * data + sigma(s) * noise, s in [0, 1].
///   kLinear:        alpha = s,            sigma = 1 - s
///   kTrigonometric: alpha = sin(pi s / 2), sigma = cos(pi s / 2)
/// The trigonometric pair is the variance-preserving alignment used with
/// DDPM-style schedulers.
enum class PathKind { kLinear, kTrigonometric };

std::string_view to_string(TimeGrid grid) noexcept;
std::string_view to_string(PathKind path) noexcept;
TimeGrid parse_time_grid(std::string_view name);
PathKind parse_path_kind(std::string_view name);

/// Scheduler values at one remapped time. Derivatives are with respect to
/// the remapped time and are analytic.
struct PathPoint {
  double time = 0.0;
  double alpha = 0.0;
  double sigma = 1.0;
  double alpha_dot = 1.0;
  double sigma_dot = -1.0;
};

PathPoint path_point(PathKind path, double time);

/// Langevin scale per step: kappa = scale * sigma + floor when
/// proportional, kappa = scale otherwise.
struct KappaRule {
  bool proportional = true;
  double scale = 0.5;
  double floor = 1e-3;

  static KappaRule sigma_proportional(double scale, double floor) { return {true, scale, floor}; }
  static KappaRule constant(double kappa) { return {false, kappa, 0.0}; }

  double operator()(double sigma) const noexcept { return proportional ? scale * sigma + floor : scale; }
};

/// Discretized annealing path. Steps are indexed t = T, ..., 1 as in the
/// sampler loop; xi(T) = 0 is the Gaussian end and xi(1) = 1 the data end.
class AnnealSchedule {
 public:
  /// `times[t - 1]` is xi(t). Throws kInvalidArgument unless times are
  /// strictly decreasing in t with xi(T) = 0 and xi(1) = 1.
  static AnnealSchedule from_times(std::vector<double> times, PathKind path, KappaRule kappa, int mcmc_steps);

  int steps() const noexcept { return static_cast<int>(times_.size()); }
  int mcmc_steps() const noexcept { return mcmc_steps_; }
  PathKind path() const noexcept { return path_; }
  const KappaRule& kappa_rule() const noexcept { return kappa_rule_; }

  double xi(int t) const;
  PathPoint point(int t) const;
  double kappa(int t) const;

  /// Remapped-time increment of the transition into stage t, xi(t) - xi(t + 1).
  double delta_into(int t) const;

 private:
  AnnealSchedule() = default;
  void check_step(int t) const;

  std::vector<double> times_;
  std::vector<PathPoint> points_;
  std::vector<double> kappas_;
  PathKind path_ = PathKind::kLinear;
  KappaRule kappa_rule_;
  int mcmc_steps_ = 0;
};

AnnealSchedule make_schedule(int steps, TimeGrid grid, KappaRule kappa, int mcmc_steps,
                             PathKind path = PathKind::kLinear);

}  // namespace poe
