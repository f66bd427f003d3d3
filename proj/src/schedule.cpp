#include "poe/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "poe/errors.hpp"

namespace poe {

std::string_view to_string(TimeGrid grid) noexcept {
  return grid == TimeGrid::kUniform ? "uniform" : "cosine";
}

std::string_view to_string(PathKind path) noexcept {
  return path == PathKind::kLinear ? "linear" : "trigonometric";
}

TimeGrid parse_time_grid(std::string_view name) {
  if (name == "uniform") return TimeGrid::kUniform;
  if (name == "cosine") return TimeGrid::kCosine;
  fail(ErrorKind::kInvalidArgument, "unknown time grid '" + std::string(name) + "'");
}

PathKind parse_path_kind(std::string_view name) {
  if (name == "linear") return PathKind::kLinear;
  if (name == "trigonometric") return PathKind::kTrigonometric;
  fail(ErrorKind::kInvalidArgument, "unknown path kind '" + std::string(name) + "'");
}

PathPoint path_point(PathKind path, double time) {
  PathPoint p;
  p.time = time;
  switch (path) {
    case PathKind::kLinear:
      p.alpha = time;
      p.sigma = 1.0 - time;
      p.alpha_dot = 1.0;
      p.sigma_dot = -1.0;
      break;
    case PathKind::kTrigonometric: {
      constexpr double half_pi = std::numbers::pi / 2.0;
      p.alpha = std::sin(half_pi * time);
      p.sigma = std::cos(half_pi * time);
      p.alpha_dot = half_pi * std::cos(half_pi * time);
      p.sigma_dot = -half_pi * std::sin(half_pi * time);
      // Pin the endpoints so the boundary conditions hold exactly.
      if (time == 0.0) p.alpha = 0.0, p.sigma = 1.0;
      if (time == 1.0) p.alpha = 1.0, p.sigma = 0.0, p.alpha_dot = 0.0;
      break;
    }
  }
  return p;
}

AnnealSchedule AnnealSchedule::from_times(std::vector<double> times, PathKind path, KappaRule kappa,
                                          int mcmc_steps) {
  const auto steps = static_cast<int>(times.size());
  if (steps < 2) fail(ErrorKind::kInvalidArgument, "annealing needs T >= 2 steps, got " + std::to_string(steps));
  if (mcmc_steps < 0) fail(ErrorKind::kInvalidArgument, "MCMC step count K must be non-negative");
  if (times.back() != 0.0 || times.front() != 1.0) {
    fail(ErrorKind::kInvalidArgument, "remapped times must satisfy xi(T) = 0 and xi(1) = 1");
  }
  for (int t = 1; t < steps; ++t) {
    // times[t - 1] = xi(t) must exceed times[t] = xi(t + 1).
    if (!(times[t - 1] > times[t])) {
      fail(ErrorKind::kInvalidArgument,
           "remapped times must be strictly decreasing in t; xi(" + std::to_string(t) + ") <= xi(" +
               std::to_string(t + 1) + ")");
    }
  }

  AnnealSchedule s;
  s.path_ = path;
  s.kappa_rule_ = kappa;
  s.mcmc_steps_ = mcmc_steps;
  s.points_.reserve(times.size());
  s.kappas_.reserve(times.size());
  for (int t = 1; t <= steps; ++t) {
    const PathPoint p = path_point(path, times[t - 1]);
    const double k = kappa(p.sigma);
    if (!(k > 0.0) || !std::isfinite(k)) {
      fail(ErrorKind::kInvalidArgument, "Langevin scale kappa must be positive; kappa(" + std::to_string(t) +
                                            ") = " + std::to_string(k));
    }
    s.points_.push_back(p);
    s.kappas_.push_back(k);
  }
  s.times_ = std::move(times);
  return s;
}

void AnnealSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    fail(ErrorKind::kInvalidArgument,
         "step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
}

double AnnealSchedule::xi(int t) const {
  check_step(t);
  return times_[t - 1];
}

PathPoint AnnealSchedule::point(int t) const {
  check_step(t);
  return points_[t - 1];
}

double AnnealSchedule::kappa(int t) const {
  check_step(t);
  return kappas_[t - 1];
}

double AnnealSchedule::delta_into(int t) const {
  check_step(t);
  if (t == steps()) fail(ErrorKind::kInvalidArgument, "no transition into the first stage T");
  return times_[t - 1] - times_[t];
}

AnnealSchedule make_schedule(int steps, TimeGrid grid, KappaRule kappa, int mcmc_steps, PathKind path) {
  if (steps < 2) fail(ErrorKind::kInvalidArgument, "annealing needs T >= 2 steps, got " + std::to_string(steps));
  std::vector<double> times(static_cast<std::size_t>(steps));
  const double span = steps - 1;
  for (int t = 1; t <= steps; ++t) {
    const double u = (steps - t) / span;
    times[t - 1] = grid == TimeGrid::kUniform ? u : 0.5 * (1.0 - std::cos(std::numbers::pi * u));
  }
  times.front() = 1.0;
  times.back() = 0.0;
  return AnnealSchedule::from_times(std::move(times), path, kappa, mcmc_steps);
}

}  // namespace poe
