#include "poe/annealing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "poe/errors.hpp"

namespace poe {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_finite(const Eigen::VectorXd& x, const std::string& what) {
  if (!x.allFinite()) fail(ErrorKind::kNumerical, what + " is not finite");
}

void check_stage(int step, const AnnealSchedule& schedule) {
  if (step < 1 || step >= schedule.steps()) {
    fail(ErrorKind::kInvalidArgument,
         "stage " + std::to_string(step) + " outside [1, " + std::to_string(schedule.steps() - 1) + "]");
  }
}

}  // namespace

FlowProduct::FlowProduct(Eigen::Index dim, std::vector<FlowComponent> components, ConditioningGraph graph)
    : dim_(dim), components_(std::move(components)), graph_(std::move(graph)) {
  if (dim_ < 1) fail(ErrorKind::kInvalidArgument, "state dimension must be >= 1");
  if (components_.empty()) fail(ErrorKind::kInvalidArgument, "flow product needs at least one expert");
  const std::size_t n = components_.size();
  if (graph_.size() == 0) graph_ = ConditioningGraph::unconditional(n);
  if (graph_.size() != n) {
    fail(ErrorKind::kGraphInconsistency, "conditioning graph has " + std::to_string(graph_.size()) +
                                             " nodes for " + std::to_string(n) + " experts");
  }

  Eigen::VectorXd cover = Eigen::VectorXd::Zero(dim_);
  for (auto& c : components_) {
    if (!c.expert) fail(ErrorKind::kInvalidArgument, "expert '" + c.name + "' is null");
    if (c.region.empty()) {
      c.region.resize(static_cast<std::size_t>(dim_));
      for (Eigen::Index i = 0; i < dim_; ++i) c.region[static_cast<std::size_t>(i)] = i;
    }
    std::sort(c.region.begin(), c.region.end());
    if (std::adjacent_find(c.region.begin(), c.region.end()) != c.region.end()) {
      fail(ErrorKind::kInvalidArgument, "region of expert '" + c.name + "' repeats an index");
    }
    if (c.region.front() < 0 || c.region.back() >= dim_) {
      fail(ErrorKind::kInvalidArgument, "region of expert '" + c.name + "' leaves the state");
    }
    if (c.expert->dim() != static_cast<Eigen::Index>(c.region.size())) {
      fail(ErrorKind::kInvalidArgument, "expert '" + c.name + "' has dimension " + std::to_string(c.expert->dim()) +
                                            " but its region has " + std::to_string(c.region.size()) + " indices");
    }
    for (Eigen::Index i : c.region) cover[i] += 1.0;
  }
  for (Eigen::Index j = 0; j < dim_; ++j) {
    if (cover[j] == 0.0) {
      fail(ErrorKind::kInvalidComposition, "coordinate " + std::to_string(j) + " is not covered by any expert");
    }
  }

  Eigen::VectorXd weight_sum = Eigen::VectorXd::Zero(dim_);
  for (auto& c : components_) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(dim_);
    if (c.weight.size() == 0) {
      for (Eigen::Index i : c.region) full[i] = 1.0 / cover[i];
    } else if (c.weight.size() == static_cast<Eigen::Index>(c.region.size())) {
      full = zero_pad_region(c.weight, dim_, c.region);
    } else if (c.weight.size() == dim_) {
      full = c.weight;
      Eigen::VectorXd inside = Eigen::VectorXd::Zero(dim_);
      for (Eigen::Index i : c.region) inside[i] = 1.0;
      for (Eigen::Index j = 0; j < dim_; ++j) {
        if (inside[j] == 0.0 && full[j] != 0.0) {
          fail(ErrorKind::kInvalidComposition,
               "weight of expert '" + c.name + "' is nonzero outside its region at " + std::to_string(j));
        }
      }
    } else {
      fail(ErrorKind::kInvalidComposition, "weight of expert '" + c.name + "' has the wrong size");
    }
    if (!full.allFinite() || full.minCoeff() < 0.0 || full.maxCoeff() > 1.0) {
      fail(ErrorKind::kInvalidComposition, "weight of expert '" + c.name + "' leaves [0, 1]");
    }
    c.weight = full;
    weight_sum += full;
  }
  const double deviation = (weight_sum.array() - 1.0).abs().maxCoeff();
  if (!(deviation <= kWeightSumTolerance)) {
    fail(ErrorKind::kInvalidComposition,
         "region weights must sum to 1 elementwise; max deviation " + std::to_string(deviation));
  }
}

Eigen::VectorXd FlowProduct::gather(const Eigen::VectorXd& x, std::size_t i) const {
  const auto& region = components_[i].region;
  Eigen::VectorXd out(static_cast<Eigen::Index>(region.size()));
  for (std::size_t k = 0; k < region.size(); ++k) out[static_cast<Eigen::Index>(k)] = x[region[k]];
  return out;
}

std::vector<RegionalVelocity> FlowProduct::expert_velocities(const Eigen::VectorXd& x, const PathPoint& point) const {
  if (x.size() != dim_) {
    fail(ErrorKind::kInvalidArgument,
         "state has dimension " + std::to_string(x.size()) + ", product expects " + std::to_string(dim_));
  }
  std::vector<RegionalVelocity> evals(components_.size());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    evals[i].region = components_[i].region;
    evals[i].velocity = components_[i].expert->velocity(gather(x, i), point);
    if (evals[i].velocity.size() != static_cast<Eigen::Index>(evals[i].region.size())) {
      fail(ErrorKind::kInvalidArgument, "expert '" + components_[i].name + "' returned a velocity of wrong size");
    }
    check_finite(evals[i].velocity, "velocity of expert '" + components_[i].name + "'");
  }
  if (!graph_.active()) return evals;
  for (std::size_t i : graph_.order()) {
    if (graph_.parents(i).empty()) continue;
    const auto& c = components_[i];
    const Eigen::MatrixXd jac = velocity_jacobian(*c.expert, gather(x, i), point, c.jacobian);
    evals[i].velocity = conditional_velocity(i, evals, jac, graph_);
  }
  return evals;
}

Eigen::VectorXd FlowProduct::velocity(const Eigen::VectorXd& x, const PathPoint& point) const {
  const auto evals = expert_velocities(x, point);
  std::vector<ExpertField> fields;
  fields.reserve(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) {
    fields.push_back({zero_pad_region(evals[i].velocity, dim_, evals[i].region), {}, components_[i].weight});
  }
  return compose_fields(fields).velocity;
}

ComposedField FlowProduct::field(const Eigen::VectorXd& x, const PathPoint& point) const {
  const auto evals = expert_velocities(x, point);
  std::vector<ExpertField> fields;
  fields.reserve(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const Eigen::VectorXd score = velocity_to_score(evals[i].velocity, gather(x, i), point);
    fields.push_back({zero_pad_region(evals[i].velocity, dim_, evals[i].region),
                      zero_pad_region(score, dim_, evals[i].region), components_[i].weight});
  }
  ComposedField out;
  out.velocity = compose_fields(fields).velocity;
  out.score = compose_product_score(fields);
  return out;
}

std::optional<double> FlowProduct::log_density(const Eigen::VectorXd& x, const PathPoint& point) const {
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto lp = components_[i].expert->log_density(gather(x, i), point);
    if (!lp) return std::nullopt;
    total += *lp;
  }
  return total;
}

std::string_view to_string(McmcKind kind) noexcept { return kind == McmcKind::kUla ? "ula" : "mala"; }

McmcKind parse_mcmc_kind(std::string_view name) {
  if (name == "ula") return McmcKind::kUla;
  if (name == "mala") return McmcKind::kMala;
  fail(ErrorKind::kInvalidArgument, "unknown MCMC kernel '" + std::string(name) + "'");
}

PathPoint mcmc_point(const AnnealSchedule& schedule, int step, const AnnealOptions& options) {
  if (schedule.xi(step) > options.score_time_ceiling) return path_point(schedule.path(), options.score_time_ceiling);
  return schedule.point(step);
}

StageTrace run_stage(Eigen::VectorXd& x, int step, const FlowProduct& product, const AnnealSchedule& schedule,
                     RngHandle& rng, const AnnealOptions& options) {
  check_stage(step, schedule);
  const auto start = Clock::now();
  StageTrace trace;
  trace.step = step;

  const Eigen::VectorXd v = product.velocity(x, schedule.point(step + 1));
  x = euler_step(x, v, schedule, step);
  check_finite(x, "state after the transition into stage " + std::to_string(step));
  if (options.record_snapshots) trace.pre_mcmc = x;

  const int mcmc_steps = schedule.mcmc_steps();
  if (mcmc_steps > 0) {
    const PathPoint p = mcmc_point(schedule, step, options);
    const double kappa = schedule.kappa(step);
    for (int k = 0; k < mcmc_steps; ++k) {
      if (options.mcmc == McmcKind::kUla) {
        const ComposedField f = product.field(x, p);
        trace.score_norm = f.score.norm();
        x = langevin_step(x, f.score, kappa, rng);
      } else {
        if (!product.log_density(x, p)) {
          fail(ErrorKind::kInvalidArgument, "MALA needs experts with a marginal log density");
        }
        const ScoreFn score = [&](const Eigen::VectorXd& y) { return product.field(y, p).score; };
        const LogDensityFn logp = [&](const Eigen::VectorXd& y) { return *product.log_density(y, p); };
        x = mala_step(x, kappa, score, logp, rng);
        trace.score_norm = score(x).norm();
      }
      check_finite(x, "state after MCMC step " + std::to_string(k + 1) + " of stage " + std::to_string(step));
    }
  }
  if (options.record_snapshots) trace.post_mcmc = x;
  trace.wallclock_seconds = seconds_since(start);
  return trace;
}

StageTrace run_stage(DiscreteState& x, int step, const ArProduct& product, const AnnealSchedule& schedule,
                     RngHandle& rng, const AnnealOptions& options) {
  check_stage(step, schedule);
  if (schedule.steps() != product.geometry().num_slices) {
    fail(ErrorKind::kInvalidArgument, "autoregressive schedules need one stage per slice");
  }
  if (x.filled_len() != schedule.steps() - step) {
    fail(ErrorKind::kInvalidArgument, "prefix of length " + std::to_string(x.filled_len()) +
                                          " does not belong to stage " + std::to_string(step + 1));
  }
  const auto start = Clock::now();
  StageTrace trace;
  trace.step = step;
  append_kernel(x, product.experts(), rng, product.append_mode());
  if (options.record_snapshots) trace.pre_mcmc = x;
  for (int k = 0; k < schedule.mcmc_steps(); ++k) gibbs_kernel(x, product.experts(), product.sweep_order(), rng);
  if (options.record_snapshots) trace.post_mcmc = x;
  trace.wallclock_seconds = seconds_since(start);
  return trace;
}

ChainResult run_chain(Eigen::VectorXd x0, const FlowProduct& product, const AnnealSchedule& schedule, RngHandle& rng,
                      const AnnealOptions& options) {
  if (x0.size() != product.dim()) fail(ErrorKind::kInvalidArgument, "initial state has the wrong dimension");
  ChainResult result;
  result.traces.reserve(static_cast<std::size_t>(schedule.steps() - 1));
  for (int t = schedule.steps() - 1; t >= 1; --t) result.traces.push_back(run_stage(x0, t, product, schedule, rng, options));
  result.sample = std::move(x0);
  return result;
}

ChainResult run_chain(DiscreteState x0, const ArProduct& product, const AnnealSchedule& schedule, RngHandle& rng,
                      const AnnealOptions& options) {
  if (!(x0.geometry() == product.geometry())) fail(ErrorKind::kIncompatibleExperts, "initial state geometry differs");
  ChainResult result;
  result.traces.reserve(static_cast<std::size_t>(schedule.steps() - 1));
  for (int t = schedule.steps() - 1; t >= 1; --t) result.traces.push_back(run_stage(x0, t, product, schedule, rng, options));
  result.sample = std::move(x0);
  return result;
}

DiscreteState initial_prefix(const ArProduct& product, RngHandle& rng) {
  DiscreteState state = sample_initial(product.geometry());
  append_kernel(state, product.experts(), rng, product.append_mode());
  return state;
}

}  // namespace poe
