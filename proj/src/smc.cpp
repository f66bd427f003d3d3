#include "poe/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "poe/errors.hpp"

namespace poe {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

AnnealOptions quiet(AnnealOptions options) {
  options.record_snapshots = false;
  return options;
}

// Normalized weights; throws when nothing is finite.
std::vector<double> normalized(std::span<const double> log_weights) {
  double top = kNegInf;
  for (double lw : log_weights) {
    if (std::isnan(lw)) fail(ErrorKind::kNumerical, "log weight is NaN");
    if (lw > top) top = lw;
  }
  if (!std::isfinite(top)) fail(ErrorKind::kDegeneratePopulation, "every particle has weight zero");
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - top);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

FlowModel::FlowModel(FlowProduct product, AnnealSchedule schedule, std::vector<RewardExpert> rewards,
                     AnnealOptions options)
    : product_(std::move(product)),
      schedule_(std::move(schedule)),
      rewards_(std::move(rewards)),
      options_(quiet(options)) {}

Sample FlowModel::initial(RngHandle& rng) const { return sample_initial(product_.dim(), rng); }

void FlowModel::advance(Sample& x, int step, RngHandle& rng) const {
  run_stage(std::get<Eigen::VectorXd>(x), step, product_, schedule_, rng, options_);
}

double FlowModel::intermediate_reward(const Sample& x, int step) const {
  return poe::intermediate_reward(std::get<Eigen::VectorXd>(x), rewards_, product_, schedule_, step);
}

double FlowModel::reward(const Sample& x) const {
  const auto& v = std::get<Eigen::VectorXd>(x);
  return total_reward(rewards_, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

ArModel::ArModel(ArProduct product, AnnealSchedule schedule, std::vector<RewardExpert> rewards)
    : product_(std::move(product)), schedule_(std::move(schedule)), rewards_(std::move(rewards)) {
  if (schedule_.steps() != product_.geometry().num_slices) {
    fail(ErrorKind::kInvalidArgument, "autoregressive schedules need one stage per slice (T = " +
                                          std::to_string(product_.geometry().num_slices) + ")");
  }
}

Sample ArModel::initial(RngHandle& rng) const { return initial_prefix(product_, rng); }

void ArModel::advance(Sample& x, int step, RngHandle& rng) const {
  run_stage(std::get<DiscreteState>(x), step, product_, schedule_, rng, AnnealOptions{.record_snapshots = false});
}

double ArModel::intermediate_reward(const Sample& x, int) const {
  if (rewards_.empty()) return 0.0;
  return poe::intermediate_reward(std::get<DiscreteState>(x), rewards_, product_);
}

double ArModel::reward(const Sample& x) const {
  if (rewards_.empty()) return 0.0;
  const auto flat = flatten(x);
  return total_reward(rewards_, flat);
}

double intermediate_reward(const Eigen::VectorXd& x, std::span<const RewardExpert> rewards,
                           const FlowProduct& product, const AnnealSchedule& schedule, int step) {
  if (rewards.empty()) return 0.0;
  const PathPoint point = schedule.point(step);
  Eigen::VectorXd x_hat = x;
  if (step != 1 && point.sigma != 0.0) x_hat = endpoint_predict(product.velocity(x, point), x, point);
  return total_reward(rewards, std::span<const double>(x_hat.data(), static_cast<std::size_t>(x_hat.size())));
}

double intermediate_reward(const DiscreteState& x, std::span<const RewardExpert> rewards, const ArProduct& product) {
  if (rewards.empty()) return 0.0;
  const auto flat = flatten(greedy_complete(x, product.experts()));
  return total_reward(rewards, flat);
}

std::string_view to_string(ResampleScheme scheme) noexcept {
  return scheme == ResampleScheme::kSystematic ? "systematic" : "multinomial";
}

std::string_view to_string(WeightMode mode) noexcept { return mode == WeightMode::kFull ? "full" : "incremental"; }

std::string_view to_string(ResamplePolicy::Kind kind) noexcept {
  switch (kind) {
    case ResamplePolicy::Kind::kEveryStage: return "every_stage";
    case ResamplePolicy::Kind::kEssThreshold: return "ess";
    case ResamplePolicy::Kind::kCheckpoints: return "checkpoints";
    case ResamplePolicy::Kind::kNever: return "never";
  }
  return "unknown";
}

ResampleScheme parse_resample_scheme(std::string_view name) {
  if (name == "systematic") return ResampleScheme::kSystematic;
  if (name == "multinomial") return ResampleScheme::kMultinomial;
  fail(ErrorKind::kInvalidArgument, "unknown resampling scheme '" + std::string(name) + "'");
}

WeightMode parse_weight_mode(std::string_view name) {
  if (name == "full") return WeightMode::kFull;
  if (name == "incremental") return WeightMode::kIncremental;
  fail(ErrorKind::kInvalidArgument, "unknown weight mode '" + std::string(name) + "'");
}

ResamplePolicy::Kind parse_resample_kind(std::string_view name) {
  if (name == "every_stage") return ResamplePolicy::Kind::kEveryStage;
  if (name == "ess") return ResamplePolicy::Kind::kEssThreshold;
  if (name == "checkpoints") return ResamplePolicy::Kind::kCheckpoints;
  if (name == "never") return ResamplePolicy::Kind::kNever;
  fail(ErrorKind::kInvalidArgument, "unknown resampling policy '" + std::string(name) + "'");
}

double effective_sample_size(std::span<const double> log_weights) {
  if (std::none_of(log_weights.begin(), log_weights.end(), [](double lw) { return std::isfinite(lw); })) return 0.0;
  const auto w = normalized(log_weights);
  double sum_sq = 0.0;
  for (double v : w) sum_sq += v * v;
  return 1.0 / sum_sq;
}

std::vector<std::size_t> resample_indices(std::span<const double> log_weights, std::size_t count,
                                          ResampleScheme scheme, RngHandle& rng) {
  if (log_weights.empty()) fail(ErrorKind::kInvalidArgument, "cannot resample an empty population");
  const auto w = normalized(log_weights);
  std::vector<double> cumulative(w.size());
  std::partial_sum(w.begin(), w.end(), cumulative.begin());
  cumulative.back() = 1.0;

  std::vector<std::size_t> out;
  out.reserve(count);
  const auto locate = [&](double u) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), w.size() - 1);
  };
  if (scheme == ResampleScheme::kSystematic) {
    const double u0 = rng.uniform();
    for (std::size_t k = 0; k < count; ++k) {
      out.push_back(locate((static_cast<double>(k) + u0) / static_cast<double>(count)));
    }
  } else {
    for (std::size_t k = 0; k < count; ++k) out.push_back(locate(rng.uniform()));
    std::sort(out.begin(), out.end());
  }
  return out;
}

std::vector<std::size_t> resample(ParticleSet& set, std::span<const double> log_weights, ResampleScheme scheme,
                                  RngHandle& rng, int step) {
  const std::size_t n = set.size();
  if (log_weights.size() != n) fail(ErrorKind::kInvalidArgument, "one log weight per particle required");
  const double ess_before = effective_sample_size(log_weights);
  auto parents = resample_indices(log_weights, n, scheme, rng);

  std::vector<Sample> offspring;
  offspring.reserve(n);
  for (std::size_t p : parents) offspring.push_back(set.particles[p]);
  set.particles = std::move(offspring);
  ++set.generation;
  const std::uint64_t seed = set.rngs.empty() ? rng.seed() : set.rngs.front().seed();
  set.rngs.clear();
  for (std::size_t i = 0; i < n; ++i) set.rngs.push_back(RngHandle::for_particle(seed, i, set.generation));
  set.log_weights.assign(n, 0.0);

  set.ess_history.push_back({step, ess_before});
  set.ess_history.push_back({step, effective_sample_size(set.log_weights)});
  set.resample_events.push_back(step);
  return parents;
}

std::vector<double> binarize_at_median(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  const double median = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out[i] = (rewards[i] >= median || rewards[i] == sorted.back()) ? 0.0 : kNegInf;
  }
  return out;
}

SmcResult run_smc(const ProductModel& model, const SmcOptions& options, std::uint64_t seed) {
  const std::size_t n = options.particles;
  if (n < 1) fail(ErrorKind::kInvalidArgument, "SMC needs at least one particle");
  if (options.policy.kind == ResamplePolicy::Kind::kEssThreshold &&
      !(options.policy.ess_fraction > 0.0 && options.policy.ess_fraction <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "ESS fraction must lie in (0, 1]");
  }
  const AnnealSchedule& schedule = model.schedule();
  const int steps = schedule.steps();

  ParticleSet set;
  set.particles.resize(n);
  set.log_weights.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) set.rngs.push_back(RngHandle::for_particle(seed, i));
  RngHandle population(seed, kPopulationStream);

  std::vector<double> rewards(n, 0.0);
  for_each_index(n, options.execution, [&](std::size_t i) {
    set.particles[i] = model.initial(set.rngs[i]);
    rewards[i] = model.intermediate_reward(set.particles[i], steps);
  });
  if (options.weight_mode == WeightMode::kIncremental) set.log_weights = rewards;
  std::vector<double> previous = rewards;

  SmcResult result;
  for (int t = steps - 1; t >= 1; --t) {
    for_each_index(n, options.execution, [&](std::size_t i) {
      model.advance(set.particles[i], t, set.rngs[i]);
      rewards[i] = model.intermediate_reward(set.particles[i], t);
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isnan(rewards[i])) fail(ErrorKind::kNumerical, "reward of particle " + std::to_string(i) + " is NaN");
      if (options.weight_mode == WeightMode::kFull) {
        set.log_weights[i] = rewards[i];
      } else if (std::isfinite(rewards[i]) && std::isfinite(previous[i])) {
        set.log_weights[i] += rewards[i] - previous[i];
      } else {
        set.log_weights[i] = std::isfinite(rewards[i]) ? set.log_weights[i] : kNegInf;
      }
    }
    previous = rewards;

    StageStats stats;
    stats.step = t;
    stats.ess = effective_sample_size(set.log_weights);
    stats.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(n);
    stats.max_reward = *std::max_element(rewards.begin(), rewards.end());

    bool due = false;
    switch (options.policy.kind) {
      case ResamplePolicy::Kind::kEveryStage: due = true; break;
      case ResamplePolicy::Kind::kEssThreshold:
        due = stats.ess < options.policy.ess_fraction * static_cast<double>(n);
        break;
      case ResamplePolicy::Kind::kCheckpoints: {
        const auto& cp = options.policy.checkpoints;
        due = std::find(cp.begin(), cp.end(), t) != cp.end();
        break;
      }
      case ResamplePolicy::Kind::kNever: break;
    }
    if (n > 1 && due) {
      std::vector<double> weights = set.log_weights;
      if (options.policy.kind == ResamplePolicy::Kind::kCheckpoints && options.policy.binarize) {
        weights = binarize_at_median(rewards);
      }
      const auto parents = resample(set, weights, options.scheme, population, t);
      std::vector<double> carried(n);
      for (std::size_t i = 0; i < n; ++i) carried[i] = previous[parents[i]];
      previous = carried;
      rewards = carried;
      stats.resampled = true;
    }
    result.stages.push_back(stats);
  }

  result.rewards.resize(n);
  for_each_index(n, options.execution, [&](std::size_t i) { result.rewards[i] = model.reward(set.particles[i]); });
  result.selected = static_cast<std::size_t>(std::max_element(result.rewards.begin(), result.rewards.end()) -
                                             result.rewards.begin());
  result.selected_reward = result.rewards[result.selected];
  result.particles = std::move(set.particles);
  result.log_weights = std::move(set.log_weights);
  result.ess_history = std::move(set.ess_history);
  result.resample_events = std::move(set.resample_events);
  return result;
}

}  // namespace poe
