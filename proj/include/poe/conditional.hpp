#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "poe/experts.hpp"
#include "poe/schedule.hpp"

namespace poe {

/// How the Jacobian of an expert's velocity is obtained for the parent
/// correction.
struct JacobianMode {
  enum class Kind { kAnalytic, kFiniteDifference };
  Kind kind = Kind::kAnalytic;
  double step = 1e-4;

  static JacobianMode analytic() { return {Kind::kAnalytic, 1e-4}; }
  static JacobianMode finite_difference(double h) { return {Kind::kFiniteDifference, h}; }
};

/// Parent structure of conditional experts. `parents[i]` lists the experts
/// whose predicted flow expert i is pulled toward.
class ConditioningGraph {
 public:
  ConditioningGraph() = default;

  /// Throws kGraphInconsistency on unknown parents, self-loops or cycles.
  ConditioningGraph(std::size_t experts, std::vector<std::vector<std::size_t>> parents, double w = 0.1,
                    int num_updates = 2);

  static ConditioningGraph unconditional(std::size_t experts) { return ConditioningGraph(experts, {}, 0.0, 0); }

  std::size_t size() const noexcept { return parents_.size(); }
  const std::vector<std::size_t>& parents(std::size_t expert) const;
  bool has_parents() const noexcept;

  /// Deterministic topological order (Kahn's algorithm, lowest index first).
  const std::vector<std::size_t>& order() const noexcept { return order_; }

  double w() const noexcept { return w_; }
  int num_updates() const noexcept { return num_updates_; }

  /// Whether corrections change anything at all.
  bool active() const noexcept { return w_ != 0.0 && num_updates_ > 0 && has_parents(); }

 private:
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::size_t> order_;
  double w_ = 0.0;
  int num_updates_ = 0;
};

/// Velocity of one expert on its own coordinates.
struct RegionalVelocity {
  std::vector<Eigen::Index> region;  // full-state indices, sorted
  Eigen::VectorXd velocity;          // size == region.size()
};

Eigen::MatrixXd velocity_jacobian(const FlowExpert& expert, const Eigen::VectorXd& x, const PathPoint& point,
                                  JacobianMode mode);

/// Parent-corrected velocity of expert i:
///   u <- u - w * sum_{p in pa(i)} grad_x || v_i(x) - stopgrad(v_p) ||^2
/// repeated `num_updates` times with the Jacobian of v_i held at x, i.e.
///   u <- u - 2 w J^T (u - v_p)
/// restricted to the coordinates shared with each parent. Parents whose
/// region does not intersect the expert's contribute nothing.
/// Throws kGraphInconsistency when a parent's evaluation is missing and
/// kNumerical when the correction is not finite.
Eigen::VectorXd conditional_velocity(std::size_t expert, std::span<const RegionalVelocity> evals,
                                     const Eigen::MatrixXd& jacobian, const ConditioningGraph& graph);

/// Scatter a regional vector into a zero vector of size `dim`.
Eigen::VectorXd zero_pad_region(const Eigen::VectorXd& regional, Eigen::Index dim,
                                std::span<const Eigen::Index> region);

/// Grid layout for mask blurring; 1D masks use rows = 1.
struct GridShape {
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
};

struct BlurredMask {
  Eigen::VectorXd weight;      // blurred mask in [0, 1]
  Eigen::VectorXd complement;  // 1 - weight
};

/// Separable Gaussian blur (standard deviation = radius, in grid cells) of
/// a binary mask, clipped to [0, 1], paired with its complement. Boundary
/// cells renormalize by the kernel mass that falls inside the grid.
BlurredMask blur_mask(const Eigen::VectorXd& mask, GridShape shape, double radius);

}  // namespace poe
