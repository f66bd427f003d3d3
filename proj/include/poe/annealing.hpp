#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "poe/ar.hpp"
#include "poe/conditional.hpp"
#include "poe/experts.hpp"
#include "poe/flowmath.hpp"
#include "poe/rng.hpp"
#include "poe/sample.hpp"
#include "poe/schedule.hpp"

namespace poe {

/// One flow expert placed in the full state.
struct FlowComponent {
  std::string name;
  FlowExpertPtr expert;
  std::vector<Eigen::Index> region;  // empty: all coordinates
  Eigen::VectorXd weight;            // empty: 1 / cover on the region
  JacobianMode jacobian = JacobianMode::analytic();
};

/// Product of flow experts over a continuous state of dimension `dim`.
class FlowProduct {
 public:
  FlowProduct(Eigen::Index dim, std::vector<FlowComponent> components, ConditioningGraph graph = {});

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return components_.size(); }
  const FlowComponent& component(std::size_t i) const { return components_.at(i); }
  const ConditioningGraph& graph() const noexcept { return graph_; }

  /// Per-expert velocities on their own coordinates, after parent
  /// corrections (when the graph is active).
  std::vector<RegionalVelocity> expert_velocities(const Eigen::VectorXd& x, const PathPoint& point) const;

  /// Region-weighted velocity used by the Euler kernel and endpoint
  /// prediction.
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, const PathPoint& point) const;

  /// Velocity plus the score of the product of the marginals (Langevin
  /// kernel). Every expert's score is derived from its corrected velocity.
  ComposedField field(const Eigen::VectorXd& x, const PathPoint& point) const;

  /// Sum of the experts' marginal log densities, when all provide one.
  std::optional<double> log_density(const Eigen::VectorXd& x, const PathPoint& point) const;

 private:
  Eigen::VectorXd gather(const Eigen::VectorXd& x, std::size_t i) const;

  Eigen::Index dim_;
  std::vector<FlowComponent> components_;
  ConditioningGraph graph_;
};

enum class McmcKind { kUla, kMala };
std::string_view to_string(McmcKind kind) noexcept;
McmcKind parse_mcmc_kind(std::string_view name);

struct AnnealOptions {
  McmcKind mcmc = McmcKind::kUla;
  /// Scores are singular at sigma = 0. The Langevin kernel of such a stage
  /// evaluates the path at min(xi(t), score_time_ceiling) instead.
  double score_time_ceiling = 1.0 - 1e-4;
  bool record_snapshots = true;
};

struct StageTrace {
  int step = 0;
  std::optional<Sample> pre_mcmc;
  std::optional<Sample> post_mcmc;
  double score_norm = 0.0;  // norm of the last composed score (flows)
  double wallclock_seconds = 0.0;
};

/// Path point used by the MCMC kernel at stage `step`.
PathPoint mcmc_point(const AnnealSchedule& schedule, int step, const AnnealOptions& options);

/// Transition into stage `step` followed by K MCMC steps.
/// Flows: Euler step with the composed velocity evaluated at xi(step + 1),
/// then Langevin (or MALA) steps on the product score.
StageTrace run_stage(Eigen::VectorXd& x, int step, const FlowProduct& product, const AnnealSchedule& schedule,
                     RngHandle& rng, const AnnealOptions& options = {});

/// Autoregressive stage: append one slice, then K Gibbs sweeps.
StageTrace run_stage(DiscreteState& x, int step, const ArProduct& product, const AnnealSchedule& schedule,
                     RngHandle& rng, const AnnealOptions& options = {});

struct ChainResult {
  Sample sample;
  std::vector<StageTrace> traces;
};

/// Stages t = T - 1, ..., 1 from a stage-T sample.
ChainResult run_chain(Eigen::VectorXd x0, const FlowProduct& product, const AnnealSchedule& schedule,
                      RngHandle& rng, const AnnealOptions& options = {});

/// Discrete chains start from a prefix with one slice, the stage-T state.
/// Requires schedule.steps() == num_slices.
ChainResult run_chain(DiscreteState x0, const ArProduct& product, const AnnealSchedule& schedule, RngHandle& rng,
                      const AnnealOptions& options = {});

/// Stage-T state of a discrete chain: the first slice appended to `empty`.
DiscreteState initial_prefix(const ArProduct& product, RngHandle& rng);

}  // namespace poe
