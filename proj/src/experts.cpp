#include "poe/experts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "poe/errors.hpp"

namespace poe {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::VectorXd to_vector(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

void check_dim(Eigen::Index expected, Eigen::Index got, const char* what) {
  if (expected != got) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + ": expected dimension " + std::to_string(expected) +
                                          ", got " + std::to_string(got));
  }
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

std::optional<Eigen::MatrixXd> FlowExpert::velocity_jacobian(const Eigen::VectorXd&, const PathPoint&) const {
  return std::nullopt;
}
std::optional<double> FlowExpert::log_density(const Eigen::VectorXd&, const PathPoint&) const {
  return std::nullopt;
}
std::optional<Eigen::VectorXd> FlowExpert::exact_score(const Eigen::VectorXd&, const PathPoint&) const {
  return std::nullopt;
}
std::optional<Eigen::VectorXd> FlowExpert::posterior_mean(const Eigen::VectorXd&, const PathPoint&) const {
  return std::nullopt;
}

// --- Gaussian -------------------------------------------------------------

GaussianFlowExpert::GaussianFlowExpert(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  const Eigen::Index d = mean_.size();
  if (d < 1) fail(ErrorKind::kInvalidArgument, "Gaussian expert needs dimension >= 1");
  if (cov_.rows() != d || cov_.cols() != d) {
    fail(ErrorKind::kInvalidArgument, "covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  }
  if (!mean_.allFinite() || !cov_.allFinite()) fail(ErrorKind::kInvalidArgument, "non-finite Gaussian parameters");
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    fail(ErrorKind::kInvalidArgument, "covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "covariance is not positive definite");
  }
  basis_ = eig.eigenvectors();
  eigenvalues_ = eig.eigenvalues();
}

Eigen::VectorXd GaussianFlowExpert::marginal_mean(const PathPoint& p) const { return p.alpha * mean_; }

Eigen::MatrixXd GaussianFlowExpert::marginal_cov(const PathPoint& p) const {
  const Eigen::VectorXd s = (p.alpha * p.alpha) * eigenvalues_.array() + p.sigma * p.sigma;
  return basis_ * s.asDiagonal() * basis_.transpose();
}

Eigen::MatrixXd GaussianFlowExpert::marginal_precision(const PathPoint& p) const {
  const Eigen::VectorXd s = (p.alpha * p.alpha) * eigenvalues_.array() + p.sigma * p.sigma;
  return basis_ * s.cwiseInverse().asDiagonal() * basis_.transpose();
}

Eigen::MatrixXd GaussianFlowExpert::drift_matrix(const PathPoint& p) const {
  const Eigen::ArrayXd s = (p.alpha * p.alpha) * eigenvalues_.array() + p.sigma * p.sigma;
  const Eigen::ArrayXd num = (p.alpha_dot * p.alpha) * eigenvalues_.array() + p.sigma_dot * p.sigma;
  const Eigen::VectorXd diag = num / s;
  return basis_ * diag.asDiagonal() * basis_.transpose();
}

Eigen::VectorXd GaussianFlowExpert::velocity(const Eigen::VectorXd& x, const PathPoint& p) const {
  check_dim(dim(), x.size(), "Gaussian expert velocity");
  return p.alpha_dot * mean_ + drift_matrix(p) * (x - p.alpha * mean_);
}

std::optional<Eigen::MatrixXd> GaussianFlowExpert::velocity_jacobian(const Eigen::VectorXd& x,
                                                                     const PathPoint& p) const {
  check_dim(dim(), x.size(), "Gaussian expert Jacobian");
  return drift_matrix(p);
}

std::optional<double> GaussianFlowExpert::log_density(const Eigen::VectorXd& x, const PathPoint& p) const {
  check_dim(dim(), x.size(), "Gaussian expert density");
  const Eigen::ArrayXd s = (p.alpha * p.alpha) * eigenvalues_.array() + p.sigma * p.sigma;
  const Eigen::VectorXd z = basis_.transpose() * (x - p.alpha * mean_);
  return -0.5 * (z.array().square() / s).sum() - 0.5 * (s.log().sum() + static_cast<double>(dim()) * kLog2Pi);
}

std::optional<Eigen::VectorXd> GaussianFlowExpert::exact_score(const Eigen::VectorXd& x, const PathPoint& p) const {
  check_dim(dim(), x.size(), "Gaussian expert score");
  return Eigen::VectorXd(-(marginal_precision(p) * (x - p.alpha * mean_)));
}

std::optional<Eigen::VectorXd> GaussianFlowExpert::posterior_mean(const Eigen::VectorXd& x,
                                                                  const PathPoint& p) const {
  check_dim(dim(), x.size(), "Gaussian expert posterior mean");
  const Eigen::ArrayXd s = (p.alpha * p.alpha) * eigenvalues_.array() + p.sigma * p.sigma;
  const Eigen::VectorXd gain = (p.alpha * eigenvalues_.array()) / s;
  return Eigen::VectorXd(mean_ + basis_ * gain.asDiagonal() * basis_.transpose() * (x - p.alpha * mean_));
}

// --- Gaussian mixture -----------------------------------------------------

GmmFlowExpert::GmmFlowExpert(std::vector<double> weights, std::vector<GaussianFlowExpert> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (components_.empty() || weights_.size() != components_.size()) {
    fail(ErrorKind::kInvalidArgument, "mixture needs one weight per component and at least one component");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::kInvalidArgument, "mixture weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorKind::kInvalidArgument, "mixture weights must sum to 1, got " + std::to_string(total));
  }
  for (const auto& c : components_) {
    if (c.dim() != components_.front().dim()) fail(ErrorKind::kInvalidArgument, "mixture components differ in dimension");
  }
}

Eigen::VectorXd GmmFlowExpert::responsibilities(const Eigen::VectorXd& x, const PathPoint& p) const {
  const auto k = static_cast<Eigen::Index>(components_.size());
  Eigen::VectorXd logits(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    logits[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + *components_[i].log_density(x, p)
                                  : -std::numeric_limits<double>::infinity();
  }
  return (logits.array() - log_sum_exp(logits)).exp();
}

Eigen::VectorXd GmmFlowExpert::velocity(const Eigen::VectorXd& x, const PathPoint& p) const {
  check_dim(dim(), x.size(), "mixture expert velocity");
  const Eigen::VectorXd r = responsibilities(x, p);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (r[static_cast<Eigen::Index>(i)] == 0.0) continue;
    v += r[static_cast<Eigen::Index>(i)] * components_[i].velocity(x, p);
  }
  return v;
}

std::optional<Eigen::MatrixXd> GmmFlowExpert::velocity_jacobian(const Eigen::VectorXd& x, const PathPoint& p) const {
  check_dim(dim(), x.size(), "mixture expert Jacobian");
  const Eigen::VectorXd r = responsibilities(x, p);
  const auto k = components_.size();
  std::vector<Eigen::VectorXd> scores(k), velocities(k);
  Eigen::VectorXd mean_score = Eigen::VectorXd::Zero(dim());
  for (std::size_t i = 0; i < k; ++i) {
    scores[i] = *components_[i].exact_score(x, p);
    velocities[i] = components_[i].velocity(x, p);
    mean_score += r[static_cast<Eigen::Index>(i)] * scores[i];
  }
  // d/dx sum_k r_k v_k = sum_k r_k A_k + sum_k v_k (grad r_k)^T,
  // grad r_k = r_k (g_k - sum_j r_j g_j).
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim(), dim());
  for (std::size_t i = 0; i < k; ++i) {
    const double ri = r[static_cast<Eigen::Index>(i)];
    if (ri == 0.0) continue;
    jac += ri * components_[i].drift_matrix(p);
    jac += ri * velocities[i] * (scores[i] - mean_score).transpose();
  }
  return jac;
}

std::optional<double> GmmFlowExpert::log_density(const Eigen::VectorXd& x, const PathPoint& p) const {
  const auto k = static_cast<Eigen::Index>(components_.size());
  Eigen::VectorXd logits(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    logits[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + *components_[i].log_density(x, p)
                                  : -std::numeric_limits<double>::infinity();
  }
  return log_sum_exp(logits);
}

std::optional<Eigen::VectorXd> GmmFlowExpert::exact_score(const Eigen::VectorXd& x, const PathPoint& p) const {
  const Eigen::VectorXd r = responsibilities(x, p);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(dim());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    s += r[static_cast<Eigen::Index>(i)] * *components_[i].exact_score(x, p);
  }
  return s;
}

std::optional<Eigen::VectorXd> GmmFlowExpert::posterior_mean(const Eigen::VectorXd& x, const PathPoint& p) const {
  const Eigen::VectorXd r = responsibilities(x, p);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    m += r[static_cast<Eigen::Index>(i)] * *components_[i].posterior_mean(x, p);
  }
  return m;
}

// --- Black box ------------------------------------------------------------

CallableFlowExpert::CallableFlowExpert(Eigen::Index dim, VelocityCallable velocity, std::vector<double> context)
    : dim_(dim), velocity_(std::move(velocity)), context_(std::move(context)) {
  if (dim_ < 1) fail(ErrorKind::kInvalidArgument, "callable expert needs dimension >= 1");
  if (!velocity_) fail(ErrorKind::kInvalidArgument, "callable expert needs a velocity function");
}

Eigen::VectorXd CallableFlowExpert::velocity(const Eigen::VectorXd& x, const PathPoint& p) const {
  check_dim(dim_, x.size(), "callable expert velocity");
  Eigen::VectorXd v = velocity_(x, p.time, context_);
  check_dim(dim_, v.size(), "callable expert output");
  return v;
}

FlowExpertPtr gaussian_flow_expert(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  return std::make_shared<GaussianFlowExpert>(std::move(mean), std::move(cov));
}

FlowExpertPtr gmm_flow_expert(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                              std::vector<Eigen::MatrixXd> covs) {
  if (means.size() != covs.size()) fail(ErrorKind::kInvalidArgument, "mixture needs one covariance per mean");
  std::vector<GaussianFlowExpert> components;
  components.reserve(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) components.emplace_back(std::move(means[i]), std::move(covs[i]));
  return std::make_shared<GmmFlowExpert>(std::move(weights), std::move(components));
}

// --- Autoregressive -------------------------------------------------------

double ArExpert::conditional_probability(std::span<const std::size_t> prefix, std::size_t code) const {
  return conditional(prefix).at(code);
}

double ArExpert::joint_probability(std::span<const std::size_t> codes) const {
  double p = 1.0;
  for (std::size_t k = 0; k < codes.size() && p > 0.0; ++k) p *= conditional_probability(codes.first(k), codes[k]);
  return p;
}

namespace {

std::string prefix_to_string(std::size_t row, std::size_t level, std::size_t base) {
  std::vector<std::size_t> digits(level);
  for (std::size_t i = level; i-- > 0;) {
    digits[i] = row % base;
    row /= base;
  }
  std::string out = "[";
  for (std::size_t i = 0; i < digits.size(); ++i) out += (i ? "," : "") + std::to_string(digits[i]);
  return out + "]";
}

std::size_t checked_state_count(const SliceGeometry& g) {
  const std::size_t s = g.slice_values();
  std::size_t total = 1;
  for (int i = 0; i < g.num_slices; ++i) {
    if (total > kMaxEnumeratedStates / s) {
      fail(ErrorKind::kCapacity, "sequence space exceeds " + std::to_string(kMaxEnumeratedStates) + " states");
    }
    total *= s;
  }
  return total;
}

}  // namespace

TabularArExpert::TabularArExpert(SliceGeometry geometry, std::vector<std::vector<double>> levels)
    : geometry_(geometry), levels_(std::move(levels)) {
  geometry_.validate();
  checked_state_count(geometry_);
  const std::size_t s = geometry_.slice_values();
  if (levels_.size() != static_cast<std::size_t>(geometry_.num_slices)) {
    fail(ErrorKind::kInvalidArgument, "tabular expert needs one table level per slice");
  }
  std::size_t rows = 1;
  for (std::size_t level = 0; level < levels_.size(); ++level) {
    const auto& table = levels_[level];
    if (table.size() != rows * s) {
      fail(ErrorKind::kInvalidArgument, "table level " + std::to_string(level) + " must have " +
                                            std::to_string(rows * s) + " entries, got " +
                                            std::to_string(table.size()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      bool valid = true;
      for (std::size_t c = 0; c < s; ++c) {
        const double v = table[r * s + c];
        valid = valid && v >= 0.0 && std::isfinite(v);
        sum += v;
      }
      if (!valid || std::abs(sum - 1.0) > kTableTolerance) {
        fail(ErrorKind::kInvalidArgument, "invalid conditional table for prefix " + prefix_to_string(r, level, s) +
                                              " (sum " + std::to_string(sum) + ")");
      }
    }
    rows *= s;
  }
}

std::span<const double> TabularArExpert::row(std::span<const std::size_t> prefix) const {
  if (prefix.size() >= levels_.size()) fail(ErrorKind::kInvalidArgument, "prefix already fills the sequence");
  const std::size_t s = geometry_.slice_values();
  std::size_t r = 0;
  for (std::size_t code : prefix) {
    if (code >= s) fail(ErrorKind::kInvalidArgument, "slice code outside the alphabet");
    r = r * s + code;
  }
  return std::span<const double>(levels_[prefix.size()]).subspan(r * s, s);
}

std::vector<double> TabularArExpert::conditional(std::span<const std::size_t> prefix) const {
  const auto r = row(prefix);
  return {r.begin(), r.end()};
}

double TabularArExpert::conditional_probability(std::span<const std::size_t> prefix, std::size_t code) const {
  const auto r = row(prefix);
  if (code >= r.size()) fail(ErrorKind::kInvalidArgument, "slice code outside the alphabet");
  return r[code];
}

std::shared_ptr<const TabularArExpert> tabular_ar_expert(SliceGeometry geometry,
                                                         std::vector<std::vector<double>> levels) {
  return std::make_shared<TabularArExpert>(geometry, std::move(levels));
}

std::shared_ptr<const TabularArExpert> random_tabular_ar_expert(SliceGeometry geometry, double concentration,
                                                                std::uint64_t seed) {
  geometry.validate();
  checked_state_count(geometry);
  if (!(concentration > 0.0)) fail(ErrorKind::kInvalidArgument, "Dirichlet concentration must be positive");
  RngHandle rng(seed, 0);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  const std::size_t s = geometry.slice_values();
  std::vector<std::vector<double>> levels;
  std::size_t rows = 1;
  for (int level = 0; level < geometry.num_slices; ++level, rows *= s) {
    std::vector<double> table(rows * s);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < s; ++c) sum += table[r * s + c] = gamma(rng.engine());
      for (std::size_t c = 0; c < s; ++c) {
        table[r * s + c] = sum > 0.0 ? table[r * s + c] / sum : 1.0 / static_cast<double>(s);
      }
    }
    levels.push_back(std::move(table));
  }
  return tabular_ar_expert(geometry, std::move(levels));
}

std::shared_ptr<const TabularArExpert> random_markov_ar_expert(SliceGeometry geometry, double concentration,
                                                               std::uint64_t seed) {
  geometry.validate();
  checked_state_count(geometry);
  if (!(concentration > 0.0)) fail(ErrorKind::kInvalidArgument, "Dirichlet concentration must be positive");
  RngHandle rng(seed, 0);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  const std::size_t s = geometry.slice_values();
  auto draw_row = [&](std::span<double> row) {
    double sum = 0.0;
    for (double& v : row) sum += v = gamma(rng.engine());
    for (double& v : row) v = sum > 0.0 ? v / sum : 1.0 / static_cast<double>(s);
  };
  std::vector<double> initial(s);
  draw_row(initial);
  std::vector<double> transition(s * s);
  for (std::size_t r = 0; r < s; ++r) draw_row(std::span<double>(transition).subspan(r * s, s));

  std::vector<std::vector<double>> levels{initial};
  std::size_t rows = s;
  for (int level = 1; level < geometry.num_slices; ++level, rows *= s) {
    std::vector<double> table(rows * s);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t last = r % s;
      std::copy_n(transition.begin() + static_cast<std::ptrdiff_t>(last * s), s,
                  table.begin() + static_cast<std::ptrdiff_t>(r * s));
    }
    levels.push_back(std::move(table));
  }
  return tabular_ar_expert(geometry, std::move(levels));
}

std::shared_ptr<const TabularArExpert> uniform_ar_expert(SliceGeometry geometry) {
  geometry.validate();
  checked_state_count(geometry);
  const std::size_t s = geometry.slice_values();
  std::vector<std::vector<double>> levels;
  std::size_t rows = 1;
  for (int level = 0; level < geometry.num_slices; ++level, rows *= s) {
    levels.emplace_back(rows * s, 1.0 / static_cast<double>(s));
  }
  return tabular_ar_expert(geometry, std::move(levels));
}

// --- Rewards --------------------------------------------------------------

RewardExpert linear_reward(Eigen::VectorXd a, std::string name) {
  if (!a.allFinite()) fail(ErrorKind::kInvalidArgument, "linear reward coefficients must be finite");
  return {std::move(name), [a = std::move(a)](std::span<const double> x) {
            check_dim(a.size(), static_cast<Eigen::Index>(x.size()), "linear reward");
            return a.dot(to_vector(x));
          }};
}

RewardExpert quadratic_reward(Eigen::MatrixXd A, Eigen::VectorXd b, std::string name) {
  if (!A.allFinite() || !b.allFinite()) fail(ErrorKind::kInvalidArgument, "quadratic reward parameters must be finite");
  if (A.rows() != b.size() || A.cols() != b.size()) {
    fail(ErrorKind::kInvalidArgument, "quadratic reward needs a square A matching b");
  }
  return {std::move(name), [A = std::move(A), b = std::move(b)](std::span<const double> x) {
            check_dim(b.size(), static_cast<Eigen::Index>(x.size()), "quadratic reward");
            const Eigen::VectorXd v = to_vector(x);
            return -v.dot(A * v) + b.dot(v);
          }};
}

RewardExpert region_indicator_reward(RegionPredicate predicate, double sharpness, bool hard, std::string name) {
  if (!std::isfinite(sharpness)) fail(ErrorKind::kInvalidArgument, "indicator sharpness must be finite");
  return {std::move(name), [predicate = std::move(predicate), sharpness, hard](std::span<const double> x) {
            const bool inside = predicate(x);
            if (hard) return inside ? 0.0 : -std::numeric_limits<double>::infinity();
            return inside ? sharpness : 0.0;
          }};
}

RegionPredicate halfspace(Eigen::VectorXd normal, double offset) {
  return [normal = std::move(normal), offset](std::span<const double> x) {
    check_dim(normal.size(), static_cast<Eigen::Index>(x.size()), "halfspace predicate");
    return normal.dot(to_vector(x)) > offset;
  };
}

double total_reward(std::span<const RewardExpert> rewards, std::span<const double> x) {
  double total = 0.0;
  for (const auto& r : rewards) total += r(x);
  return total;
}

}  // namespace poe
