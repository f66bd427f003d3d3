#include "poe/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "poe/errors.hpp"

namespace poe {

ConditioningGraph::ConditioningGraph(std::size_t experts, std::vector<std::vector<std::size_t>> parents, double w,
                                     int num_updates)
    : parents_(std::move(parents)), w_(w), num_updates_(num_updates) {
  if (parents_.size() > experts) fail(ErrorKind::kGraphInconsistency, "parent lists for unknown experts");
  parents_.resize(experts);
  if (!std::isfinite(w_) || w_ < 0.0) fail(ErrorKind::kInvalidArgument, "conditional rate w must be >= 0");
  if (num_updates_ < 0) fail(ErrorKind::kInvalidArgument, "num_updates must be >= 0");

  std::vector<std::size_t> indegree(experts, 0);
  std::vector<std::vector<std::size_t>> children(experts);
  for (std::size_t i = 0; i < experts; ++i) {
    auto& pa = parents_[i];
    std::sort(pa.begin(), pa.end());
    pa.erase(std::unique(pa.begin(), pa.end()), pa.end());
    for (std::size_t p : pa) {
      if (p >= experts) {
        fail(ErrorKind::kGraphInconsistency,
             "expert " + std::to_string(i) + " lists unknown parent " + std::to_string(p));
      }
      if (p == i) fail(ErrorKind::kGraphInconsistency, "expert " + std::to_string(i) + " is its own parent");
      children[p].push_back(i);
      ++indegree[i];
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < experts; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    order_.push_back(i);
    for (std::size_t c : children[i]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order_.size() != experts) fail(ErrorKind::kGraphInconsistency, "conditioning graph has a cycle");
}

const std::vector<std::size_t>& ConditioningGraph::parents(std::size_t expert) const {
  if (expert >= parents_.size()) {
    fail(ErrorKind::kGraphInconsistency, "expert " + std::to_string(expert) + " is not in the graph");
  }
  return parents_[expert];
}

bool ConditioningGraph::has_parents() const noexcept {
  return std::any_of(parents_.begin(), parents_.end(), [](const auto& p) { return !p.empty(); });
}

Eigen::MatrixXd velocity_jacobian(const FlowExpert& expert, const Eigen::VectorXd& x, const PathPoint& point,
                                  JacobianMode mode) {
  if (mode.kind == JacobianMode::Kind::kAnalytic) {
    auto jac = expert.velocity_jacobian(x, point);
    if (!jac) fail(ErrorKind::kInvalidArgument, "expert has no analytic Jacobian; use finite-difference mode");
    return *std::move(jac);
  }
  if (!(mode.step > 0.0)) fail(ErrorKind::kInvalidArgument, "finite-difference step must be positive");
  const Eigen::Index d = x.size();
  Eigen::MatrixXd jac(d, d);
  Eigen::VectorXd probe = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    probe[j] = x[j] + mode.step;
    const Eigen::VectorXd plus = expert.velocity(probe, point);
    probe[j] = x[j] - mode.step;
    const Eigen::VectorXd minus = expert.velocity(probe, point);
    probe[j] = x[j];
    jac.col(j) = (plus - minus) / (2.0 * mode.step);
  }
  return jac;
}

Eigen::VectorXd conditional_velocity(std::size_t expert, std::span<const RegionalVelocity> evals,
                                     const Eigen::MatrixXd& jacobian, const ConditioningGraph& graph) {
  if (expert >= evals.size()) {
    fail(ErrorKind::kGraphInconsistency, "no evaluation for expert " + std::to_string(expert));
  }
  const RegionalVelocity& own = evals[expert];
  const auto& parents = graph.parents(expert);
  if (graph.w() == 0.0 || graph.num_updates() == 0 || parents.empty()) return own.velocity;

  const auto n = static_cast<Eigen::Index>(own.region.size());
  if (own.velocity.size() != n || jacobian.rows() != n || jacobian.cols() != n) {
    fail(ErrorKind::kGraphInconsistency, "evaluation of expert " + std::to_string(expert) + " is malformed");
  }

  // Coordinates shared with each parent: (position in own region, position
  // in the parent's region).
  struct Overlap {
    std::vector<Eigen::Index> own_pos;
    Eigen::VectorXd target;
  };
  std::vector<Overlap> overlaps;
  for (std::size_t p : parents) {
    if (p >= evals.size() || evals[p].velocity.size() == 0 ||
        evals[p].velocity.size() != static_cast<Eigen::Index>(evals[p].region.size())) {
      fail(ErrorKind::kGraphInconsistency,
           "missing evaluation of parent " + std::to_string(p) + " of expert " + std::to_string(expert));
    }
    const auto& pr = evals[p].region;
    Overlap o;
    std::vector<double> target;
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto it = std::lower_bound(pr.begin(), pr.end(), own.region[static_cast<std::size_t>(a)]);
      if (it == pr.end() || *it != own.region[static_cast<std::size_t>(a)]) continue;
      o.own_pos.push_back(a);
      target.push_back(evals[p].velocity[it - pr.begin()]);
    }
    if (o.own_pos.empty()) continue;
    o.target = Eigen::Map<Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
    overlaps.push_back(std::move(o));
  }

  Eigen::VectorXd u = own.velocity;
  for (int step = 0; step < graph.num_updates(); ++step) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    for (const auto& o : overlaps) {
      for (std::size_t k = 0; k < o.own_pos.size(); ++k) {
        const Eigen::Index a = o.own_pos[k];
        grad += 2.0 * (u[a] - o.target[static_cast<Eigen::Index>(k)]) * jacobian.row(a).transpose();
      }
    }
    u -= graph.w() * grad;
  }
  if (!u.allFinite()) {
    fail(ErrorKind::kNumerical, "conditional correction of expert " + std::to_string(expert) + " is not finite");
  }
  return u;
}

Eigen::VectorXd zero_pad_region(const Eigen::VectorXd& regional, Eigen::Index dim,
                                std::span<const Eigen::Index> region) {
  if (static_cast<Eigen::Index>(region.size()) != regional.size()) {
    fail(ErrorKind::kInvalidArgument, "region has " + std::to_string(region.size()) + " indices for a vector of size " +
                                          std::to_string(regional.size()));
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 0; k < region.size(); ++k) {
    const Eigen::Index i = region[k];
    if (i < 0 || i >= dim) {
      fail(ErrorKind::kInvalidArgument, "region index " + std::to_string(i) + " outside [0, " + std::to_string(dim) + ")");
    }
    full[i] = regional[static_cast<Eigen::Index>(k)];
  }
  return full;
}

namespace {

// Blur along one axis of a row-major grid with boundary renormalization.
Eigen::VectorXd blur_axis(const Eigen::VectorXd& in, GridShape shape, const std::vector<double>& kernel,
                          bool along_cols) {
  const auto half = static_cast<Eigen::Index>(kernel.size()) - 1;
  Eigen::VectorXd out(in.size());
  for (Eigen::Index r = 0; r < shape.rows; ++r) {
    for (Eigen::Index c = 0; c < shape.cols; ++c) {
      const Eigen::Index pos = along_cols ? c : r;
      const Eigen::Index len = along_cols ? shape.cols : shape.rows;
      double acc = 0.0;
      double mass = 0.0;
      for (Eigen::Index k = -half; k <= half; ++k) {
        const Eigen::Index q = pos + k;
        if (q < 0 || q >= len) continue;
        const double w = kernel[static_cast<std::size_t>(std::abs(k))];
        const Eigen::Index idx = along_cols ? r * shape.cols + q : q * shape.cols + c;
        acc += w * in[idx];
        mass += w;
      }
      out[r * shape.cols + c] = acc / mass;
    }
  }
  return out;
}

}  // namespace

BlurredMask blur_mask(const Eigen::VectorXd& mask, GridShape shape, double radius) {
  if (shape.rows < 1 || shape.cols < 1 || mask.size() != shape.rows * shape.cols) {
    fail(ErrorKind::kInvalidArgument, "mask size does not match the grid shape");
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) fail(ErrorKind::kInvalidArgument, "blur radius must be positive");
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) fail(ErrorKind::kInvalidArgument, "mask must be binary");
  }
  const auto half = static_cast<std::size_t>(std::ceil(4.0 * radius));
  std::vector<double> kernel(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    const double z = static_cast<double>(k) / radius;
    kernel[k] = std::exp(-0.5 * z * z);
  }
  Eigen::VectorXd w = blur_axis(mask, shape, kernel, true);
  w = blur_axis(w, shape, kernel, false);
  w = w.cwiseMax(0.0).cwiseMin(1.0);
  Eigen::VectorXd complement = (1.0 - w.array()).matrix();
  return {std::move(w), std::move(complement)};
}

}  // namespace poe
