#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "poe/annealing.hpp"
#include "poe/experts.hpp"
#include "poe/parallel.hpp"
#include "poe/rng.hpp"
#include "poe/sample.hpp"
#include "poe/schedule.hpp"

namespace poe {

/// State-space-agnostic view of a product the SMC driver runs on.
class ProductModel {
 public:
  virtual ~ProductModel() = default;

  virtual const AnnealSchedule& schedule() const = 0;
  /// Draw a stage-T sample.
  virtual Sample initial(RngHandle& rng) const = 0;
  /// Propagation plus MCMC into stage `step`.
  virtual void advance(Sample& x, int step, RngHandle& rng) const = 0;
  /// Sum of the reward experts at stage `step` (endpoint-based).
  virtual double intermediate_reward(const Sample& x, int step) const = 0;
  /// Sum of the reward experts on the final sample.
  virtual double reward(const Sample& x) const = 0;
  virtual bool has_rewards() const = 0;
};

/// Flow experts plus reward experts.
class FlowModel final : public ProductModel {
 public:
  FlowModel(FlowProduct product, AnnealSchedule schedule, std::vector<RewardExpert> rewards,
            AnnealOptions options = {});

  const AnnealSchedule& schedule() const override { return schedule_; }
  Sample initial(RngHandle& rng) const override;
  void advance(Sample& x, int step, RngHandle& rng) const override;
  double intermediate_reward(const Sample& x, int step) const override;
  double reward(const Sample& x) const override;
  bool has_rewards() const override { return !rewards_.empty(); }

  const FlowProduct& product() const noexcept { return product_; }
  std::span<const RewardExpert> rewards() const noexcept { return rewards_; }

 private:
  FlowProduct product_;
  AnnealSchedule schedule_;
  std::vector<RewardExpert> rewards_;
  AnnealOptions options_;
};

/// Autoregressive experts plus reward experts.
class ArModel final : public ProductModel {
 public:
  ArModel(ArProduct product, AnnealSchedule schedule, std::vector<RewardExpert> rewards);

  const AnnealSchedule& schedule() const override { return schedule_; }
  Sample initial(RngHandle& rng) const override;
  void advance(Sample& x, int step, RngHandle& rng) const override;
  double intermediate_reward(const Sample& x, int step) const override;
  double reward(const Sample& x) const override;
  bool has_rewards() const override { return !rewards_.empty(); }

  const ArProduct& product() const noexcept { return product_; }

 private:
  ArProduct product_;
  AnnealSchedule schedule_;
  std::vector<RewardExpert> rewards_;
};

/// r_t(x) = sum_j r_j(x_hat) with x_hat the endpoint predicted from the
/// composed velocity at stage `step`. At step 1, x_hat = x.
double intermediate_reward(const Eigen::VectorXd& x, std::span<const RewardExpert> rewards,
                           const FlowProduct& product, const AnnealSchedule& schedule, int step);

/// Discrete analogue: rewards of the greedy completion of the prefix.
double intermediate_reward(const DiscreteState& x, std::span<const RewardExpert> rewards,
                           const ArProduct& product);

enum class ResampleScheme { kSystematic, kMultinomial };
enum class WeightMode { kFull, kIncremental };

struct ResamplePolicy {
  enum class Kind { kEveryStage, kEssThreshold, kCheckpoints, kNever };
  Kind kind = Kind::kEssThreshold;
  double ess_fraction = 0.5;
  std::vector<int> checkpoints;  // steps at which kCheckpoints resamples
  bool binarize = false;         // median-threshold weights at checkpoints

  static ResamplePolicy every_stage() { return {Kind::kEveryStage, 0.5, {}, false}; }
  static ResamplePolicy ess_threshold(double fraction) { return {Kind::kEssThreshold, fraction, {}, false}; }
  static ResamplePolicy never() { return {Kind::kNever, 0.5, {}, false}; }
  static ResamplePolicy at_checkpoints(std::vector<int> steps, bool binarize) {
    return {Kind::kCheckpoints, 0.5, std::move(steps), binarize};
  }
};

std::string_view to_string(ResampleScheme scheme) noexcept;
std::string_view to_string(WeightMode mode) noexcept;
std::string_view to_string(ResamplePolicy::Kind kind) noexcept;
ResampleScheme parse_resample_scheme(std::string_view name);
WeightMode parse_weight_mode(std::string_view name);
ResamplePolicy::Kind parse_resample_kind(std::string_view name);

struct SmcOptions {
  std::size_t particles = 16;
  ResamplePolicy policy;
  ResampleScheme scheme = ResampleScheme::kSystematic;
  WeightMode weight_mode = WeightMode::kFull;
  Execution execution = Execution::kParallel;
};

struct EssRecord {
  int step = 0;
  double ess = 0.0;
};

struct ParticleSet {
  std::vector<Sample> particles;
  std::vector<double> log_weights;
  std::vector<RngHandle> rngs;
  std::vector<EssRecord> ess_history;
  std::vector<int> resample_events;
  std::uint64_t generation = 0;

  std::size_t size() const noexcept { return particles.size(); }
};

/// 1 / sum w_i^2 of the normalized weights; 0 when every weight is -inf.
double effective_sample_size(std::span<const double> log_weights);

/// Offspring parent indices (sorted) for the normalized exp(log_weights).
/// Throws kDegeneratePopulation when no weight is finite.
std::vector<std::size_t> resample_indices(std::span<const double> log_weights, std::size_t count,
                                          ResampleScheme scheme, RngHandle& rng);

/// Replace the population by its offspring, reset weights to uniform,
/// re-split the particle streams and record the event at `step`. Returns
/// the parent index of every offspring.
std::vector<std::size_t> resample(ParticleSet& set, std::span<const double> log_weights, ResampleScheme scheme, RngHandle& rng,
              int step);

/// Median-threshold weights: 0 for rewards at or above the median, -inf below.
std::vector<double> binarize_at_median(std::span<const double> rewards);

struct StageStats {
  int step = 0;
  double ess = 0.0;  // before any resampling at this stage
  double mean_reward = 0.0;
  double max_reward = 0.0;
  bool resampled = false;
};

struct SmcResult {
  std::size_t selected = 0;
  double selected_reward = 0.0;
  std::vector<Sample> particles;
  std::vector<double> rewards;
  std::vector<double> log_weights;  // final, unnormalized
  std::vector<StageStats> stages;
  std::vector<EssRecord> ess_history;  // (step, ESS) before and after each resampling
  std::vector<int> resample_events;
};

/// Annealed SMC over a product model: initialize L particles at stage T,
/// advance every particle through stages T-1..1, reweight with the
/// intermediate rewards and resample per policy, then select the particle
/// with the largest final reward (lowest index on ties).
SmcResult run_smc(const ProductModel& model, const SmcOptions& options, std::uint64_t seed);

/// Stream id reserved for population-level draws (resampling).
inline constexpr std::uint64_t kPopulationStream = 0xffff'ffff'ffff'fff1ULL;

}  // namespace poe
