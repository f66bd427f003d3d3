#include "poe/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <Eigen/Core>
#include <Eigen/LU>

#include "poe/annealing.hpp"
#include "poe/ar.hpp"
#include "poe/errors.hpp"
#include "poe/experts.hpp"
#include "poe/oracle.hpp"
#include "poe/schedule.hpp"

#ifndef POE_VERSION
#define POE_VERSION "0.0.0"
#endif
#ifndef POE_BENCHMARK_DIR
#define POE_BENCHMARK_DIR "benchmarks"
#endif

namespace poe::runner {
namespace {

using config::ExperimentConfig;
using config::Json;
using Clock = std::chrono::steady_clock;

[[noreturn]] void config_error(const std::string& where, const std::string& message) {
  fail(ErrorKind::kInvalidConfig, where + ": " + message);
}

// Re-raise construction errors as config errors naming `where`.
template <typename F>
auto guarded(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidConfig) throw;
    config_error(where, e.what());
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix(const config::Matrix& m, const std::string& where) {
  const auto rows = static_cast<Eigen::Index>(m.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(m.front().size());
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(m[static_cast<std::size_t>(r)].size()) != cols) config_error(where, "ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return out;
}

std::string expert_path(std::size_t i) { return "experts[" + std::to_string(i) + "]"; }
std::string reward_path(std::size_t i) { return "rewards[" + std::to_string(i) + "]"; }

std::size_t flat_dim(const ExperimentConfig& c) {
  if (c.state.kind == "continuous") return static_cast<std::size_t>(c.state.dim);
  return static_cast<std::size_t>(c.state.num_slices) * static_cast<std::size_t>(c.state.slice_shape);
}

std::vector<RewardExpert> build_rewards(const ExperimentConfig& c) {
  std::vector<RewardExpert> out;
  const std::size_t d = flat_dim(c);
  for (std::size_t i = 0; i < c.rewards.size(); ++i) {
    const auto& r = c.rewards[i];
    const std::string where = reward_path(i);
    if (const auto* l = std::get_if<config::LinearParams>(&r.params)) {
      if (l->a.size() != d) config_error(where + ".a", "expected " + std::to_string(d) + " entries");
      out.push_back(linear_reward(to_vector(l->a), r.name));
    } else if (const auto* q = std::get_if<config::QuadraticParams>(&r.params)) {
      const Eigen::MatrixXd A = to_matrix(q->A, where + ".A");
      if (A.rows() != static_cast<Eigen::Index>(d) || A.cols() != A.rows()) {
        config_error(where + ".A", "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
      }
      if (q->b.size() != d) config_error(where + ".b", "expected " + std::to_string(d) + " entries");
      out.push_back(quadratic_reward(A, to_vector(q->b), r.name));
    } else {
      const auto& ind = std::get<config::IndicatorParams>(r.params);
      if (ind.normal.size() != d) config_error(where + ".normal", "expected " + std::to_string(d) + " entries");
      out.push_back(region_indicator_reward(halfspace(to_vector(ind.normal), ind.offset), ind.sharpness, ind.hard,
                                            r.name));
    }
  }
  return out;
}

AnnealSchedule build_schedule(const ExperimentConfig& c) {
  const auto& s = c.schedule;
  return guarded("schedule", [&] {
    const KappaRule kappa = s.kappa_rule == "constant" ? KappaRule::constant(s.kappa_scale)
                                                       : KappaRule::sigma_proportional(s.kappa_scale, s.kappa_floor);
    return make_schedule(s.T, parse_time_grid(s.grid), kappa, s.K, parse_path_kind(s.path));
  });
}

std::vector<std::vector<double>> load_levels(const config::TabularParams& p, const ExperimentConfig& c,
                                             const std::string& where) {
  if (p.file.empty()) return p.levels;
  const std::filesystem::path path = c.base_dir / p.file;
  std::ifstream in(path);
  if (!in) config_error(where + ".file", "cannot open '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    config_error(where + ".file", e.what());
  }
  if (!j.is_object() || !j.contains("levels")) config_error(where + ".file", "table file needs a 'levels' field");
  try {
    return j.at("levels").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    config_error(where + ".file", e.what());
  }
}

std::unique_ptr<ProductModel> build_flow(const ExperimentConfig& c) {
  const Eigen::Index dim = c.state.dim;
  std::vector<FlowComponent> components;
  std::vector<std::vector<std::size_t>> parents(c.experts.size());
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    const auto& e = c.experts[i];
    const std::string where = expert_path(i);
    FlowComponent comp;
    comp.name = e.name;
    comp.expert = guarded(where, [&]() -> FlowExpertPtr {
      if (const auto* g = std::get_if<config::GaussianParams>(&e.params)) {
        return gaussian_flow_expert(to_vector(g->mean), to_matrix(g->cov, where + ".cov"));
      }
      const auto& m = std::get<config::GmmParams>(e.params);
      std::vector<Eigen::VectorXd> means;
      std::vector<Eigen::MatrixXd> covs;
      for (const auto& mu : m.means) means.push_back(to_vector(mu));
      for (const auto& cv : m.covs) covs.push_back(to_matrix(cv, where + ".covs"));
      return gmm_flow_expert(m.weights, std::move(means), std::move(covs));
    });
    for (long r : e.region) comp.region.push_back(static_cast<Eigen::Index>(r));
    if (!e.weight.empty()) comp.weight = to_vector(e.weight);
    comp.jacobian = e.jacobian == "analytic" ? JacobianMode::analytic() : JacobianMode::finite_difference(e.fd_step);
    components.push_back(std::move(comp));
    if (const auto it = c.conditional.parents.find(e.name); it != c.conditional.parents.end()) {
      for (const auto& p : it->second) {
        for (std::size_t k = 0; k < c.experts.size(); ++k) {
          if (c.experts[k].name == p) parents[i].push_back(k);
        }
      }
    }
  }
  ConditioningGraph graph = guarded("conditional", [&] {
    return ConditioningGraph(c.experts.size(), parents, c.conditional.w, c.conditional.num_updates);
  });
  FlowProduct product = guarded("experts", [&] { return FlowProduct(dim, std::move(components), graph); });
  AnnealOptions options;
  options.mcmc = parse_mcmc_kind(c.schedule.mcmc);
  options.score_time_ceiling = c.schedule.score_time_ceiling;
  options.record_snapshots = false;
  return std::make_unique<FlowModel>(std::move(product), build_schedule(c), build_rewards(c), options);
}

std::vector<ArExpertPtr> build_ar_experts(const ExperimentConfig& c) {
  const SliceGeometry geometry{c.state.num_slices, c.state.alphabet, c.state.slice_shape};
  std::vector<ArExpertPtr> experts;
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    const auto& e = c.experts[i];
    const std::string where = expert_path(i);
    experts.push_back(guarded(where, [&]() -> ArExpertPtr {
      if (const auto* t = std::get_if<config::TabularParams>(&e.params)) {
        return tabular_ar_expert(geometry, load_levels(*t, c, where));
      }
      if (const auto* r = std::get_if<config::RandomTabularParams>(&e.params)) {
        return r->markov ? random_markov_ar_expert(geometry, r->concentration, r->seed)
                         : random_tabular_ar_expert(geometry, r->concentration, r->seed);
      }
      return uniform_ar_expert(geometry);
    }));
  }
  return experts;
}

std::unique_ptr<ProductModel> build_ar(const ExperimentConfig& c) {
  if (!c.conditional.parents.empty()) config_error("conditional.parents", "autoregressive products take no parents");
  ArProduct product = guarded("experts", [&] {
    return ArProduct(build_ar_experts(c), parse_sweep_order(c.schedule.sweep_order),
                     c.schedule.append == "argmax" ? AppendMode::kArgmax : AppendMode::kSample);
  });
  return std::make_unique<ArModel>(std::move(product), build_schedule(c), build_rewards(c));
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json numbers(std::span<const double> v) {
  Json out = Json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

std::string csv_number(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::uint64_t replicate_seed(std::uint64_t base, std::size_t rep) { return base + rep; }

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Moments weighted_moments(const std::vector<std::vector<double>>& xs, const std::vector<double>& w) {
  const auto d = static_cast<Eigen::Index>(xs.front().size());
  Moments m{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (std::size_t i = 0; i < xs.size(); ++i) m.mean += w[i] * to_vector(xs[i]);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd diff = to_vector(xs[i]) - m.mean;
    m.cov += w[i] * diff * diff.transpose();
  }
  return m;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

oracle::ExactDensity reference_density(const ExperimentConfig& c) {
  const auto& o = *c.oracle;
  const bool full_regions = std::all_of(c.experts.begin(), c.experts.end(), [](const auto& e) {
    return e.region.empty() && e.weight.empty();
  });
  if (!full_regions && o.kind != "enumeration") config_error("oracle.kind", "oracles need experts over the whole state");
  if (!c.conditional.parents.empty() && c.conditional.w != 0.0 && c.conditional.num_updates > 0) {
    config_error("oracle", "conditional experts have no closed-form product");
  }

  if (o.kind == "gaussian") {
    std::vector<oracle::Gaussian> factors;
    for (std::size_t i = 0; i < c.experts.size(); ++i) {
      const auto* g = std::get_if<config::GaussianParams>(&c.experts[i].params);
      if (!g) config_error(expert_path(i) + ".kind", "the gaussian oracle needs Gaussian experts");
      factors.push_back({to_vector(g->mean), to_matrix(g->cov, expert_path(i) + ".cov")});
    }
    const auto d = static_cast<Eigen::Index>(c.state.dim);
    Eigen::VectorXd tilt = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < c.rewards.size(); ++i) {
      const auto& r = c.rewards[i].params;
      if (const auto* l = std::get_if<config::LinearParams>(&r)) {
        tilt += to_vector(l->a);
      } else if (const auto* q = std::get_if<config::QuadraticParams>(&r)) {
        // exp(-x^T A x + b^T x) is N((2A)^-1 b, (2A)^-1) up to a constant.
        const Eigen::MatrixXd cov = (2.0 * to_matrix(q->A, reward_path(i) + ".A")).inverse();
        factors.push_back({cov * to_vector(q->b), 0.5 * (cov + cov.transpose())});
      } else {
        config_error(reward_path(i) + ".kind", "the gaussian oracle supports linear and quadratic rewards");
      }
    }
    return guarded("oracle", [&] {
      const auto product = oracle::gaussian_product(factors);
      const auto& g = std::get<oracle::Gaussian>(product.representation());
      return oracle::tilted_gaussian(g, tilt);
    });
  }

  const auto rewards = build_rewards(c);
  if (o.kind == "grid") {
    if (static_cast<long>(o.lower.size()) != c.state.dim) config_error("oracle.lower", "must match state.dim");
    std::vector<oracle::DensityFn> densities;
    for (std::size_t i = 0; i < c.experts.size(); ++i) {
      const auto& e = c.experts[i];
      if (const auto* g = std::get_if<config::GaussianParams>(&e.params)) {
        oracle::Gaussian gauss{to_vector(g->mean), to_matrix(g->cov, expert_path(i) + ".cov")};
        densities.push_back([gauss](std::span<const double> x) { return oracle::gaussian_pdf(gauss, x); });
      } else {
        const auto& m = std::get<config::GmmParams>(e.params);
        std::vector<oracle::Gaussian> comps;
        for (std::size_t k = 0; k < m.means.size(); ++k) {
          comps.push_back({to_vector(m.means[k]), to_matrix(m.covs.at(k), expert_path(i) + ".covs")});
        }
        auto mix = guarded(expert_path(i), [&] { return oracle::ExactDensity::mixture(m.weights, comps); });
        densities.push_back([mix](std::span<const double> x) { return mix.pdf(x); });
      }
    }
    if (!rewards.empty()) {
      densities.push_back([rewards](std::span<const double> x) { return std::exp(total_reward(rewards, x)); });
    }
    return guarded("oracle", [&] {
      return oracle::grid_product(densities, {o.lower, o.upper, static_cast<std::size_t>(o.points)});
    });
  }

  const auto experts = build_ar_experts(c);
  const SliceGeometry& geometry = experts.front()->geometry();
  const std::size_t count = guarded("state", [&] { return sequence_count(geometry); });
  std::vector<double> table(count);
  for (std::size_t s = 0; s < count; ++s) {
    const DiscreteState state = sequence_from_index(geometry, s);
    const auto codes = state.prefix_codes();
    double p = 1.0;
    for (const auto& e : experts) p *= e->joint_probability(codes);
    if (!rewards.empty() && p > 0.0) p *= std::exp(total_reward(rewards, flatten(state)));
    table[s] = p;
  }
  return guarded("oracle", [&] { return oracle::ExactDensity::table(std::move(table)); });
}

}  // namespace

BuiltExperiment build(const ExperimentConfig& config, Execution execution) {
  BuiltExperiment built;
  built.model = config.state.kind == "continuous" ? build_flow(config) : build_ar(config);
  const auto& s = config.smc;
  built.smc.particles = static_cast<std::size_t>(s.L);
  built.smc.policy.kind = parse_resample_kind(s.resample);
  built.smc.policy.ess_fraction = s.ess_fraction;
  built.smc.policy.checkpoints = s.checkpoints;
  built.smc.policy.binarize = s.binarize;
  built.smc.scheme = parse_resample_scheme(s.scheme);
  built.smc.weight_mode = parse_weight_mode(s.weight_mode);
  built.smc.execution = execution;
  return built;
}

RunRecord run_seed(const BuiltExperiment& built, std::uint64_t seed) {
  const auto start = Clock::now();
  RunRecord record;
  record.seed = seed;
  record.result = run_smc(*built.model, built.smc, seed);
  record.wallclock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return record;
}

std::vector<RunRecord> run_seeds(const ExperimentConfig& config, std::span<const std::uint64_t> seeds,
                                 Execution execution) {
  const bool outer = execution == Execution::kParallel && seeds.size() > 1;
  const BuiltExperiment built = build(config, outer ? Execution::kSerial : execution);
  std::vector<RunRecord> runs(seeds.size());
  for_each_index(seeds.size(), outer ? Execution::kParallel : Execution::kSerial,
                 [&](std::size_t i) { runs[i] = run_seed(built, seeds[i]); });
  return runs;
}

Json make_report(const ExperimentConfig& config, std::span<const RunRecord> runs) {
  Json report;
  report["schema_version"] = config::kSchemaVersion;
  report["versions"] = {{"poe", POE_VERSION},
                        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                      "." + std::to_string(EIGEN_MINOR_VERSION)},
                        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  report["config"] = config::to_json(config);
  report["runs"] = Json::array();
  double total_seconds = 0.0;
  for (const auto& run : runs) {
    const auto& r = run.result;
    Json j;
    j["seed"] = run.seed;
    j["selected_index"] = r.selected;
    j["selected_reward"] = number(r.selected_reward);
    j["selected_sample"] = numbers(flatten(r.particles.at(r.selected)));
    j["particles"] = Json::array();
    for (const auto& p : r.particles) j["particles"].push_back(numbers(flatten(p)));
    j["rewards"] = numbers(r.rewards);
    j["final_log_weights"] = numbers(r.log_weights);
    j["stages"] = Json::array();
    for (const auto& s : r.stages) {
      j["stages"].push_back({{"step", s.step},
                             {"ess", number(s.ess)},
                             {"mean_reward", number(s.mean_reward)},
                             {"max_reward", number(s.max_reward)},
                             {"resampled", s.resampled}});
    }
    j["ess_history"] = Json::array();
    for (const auto& e : r.ess_history) j["ess_history"].push_back({{"step", e.step}, {"ess", number(e.ess)}});
    j["resample_events"] = r.resample_events;
    j["wallclock_seconds"] = run.wallclock_seconds;
    total_seconds += run.wallclock_seconds;
    report["runs"].push_back(std::move(j));
  }
  report["wallclock_seconds"] = total_seconds;
  return report;
}

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, std::span<const RunRecord> runs) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    out << make_report(config, runs).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "samples.csv");
    const std::size_t d = runs.empty() ? 0 : flatten(runs.front().result.particles.front()).size();
    out << "seed,particle,reward";
    for (std::size_t k = 0; k < d; ++k) out << ",x" << k;
    out << '\n';
    for (const auto& run : runs) {
      for (std::size_t i = 0; i < run.result.particles.size(); ++i) {
        out << run.seed << ',' << i << ',' << csv_number(run.result.rewards[i]);
        for (double v : flatten(run.result.particles[i])) out << ',' << csv_number(v);
        out << '\n';
      }
    }
  }
  {
    std::ofstream out(dir / "diagnostics.csv");
    out << "seed,stage,ess,mean_reward,max_reward,resampled\n";
    for (const auto& run : runs) {
      for (const auto& s : run.result.stages) {
        out << run.seed << ',' << s.step << ',' << csv_number(s.ess) << ',' << csv_number(s.mean_reward) << ','
            << csv_number(s.max_reward) << ',' << (s.resampled ? 1 : 0) << '\n';
      }
    }
  }
}

bool VerifyResult::passed() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

VerifyResult verify(const ExperimentConfig& config, Execution execution) {
  if (!config.oracle) config_error("oracle", "verify needs an oracle declaration");
  const auto& o = *config.oracle;
  const auto exact = reference_density(config);

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(o.runs));
  for (std::size_t r = 0; r < seeds.size(); ++r) seeds[r] = replicate_seed(config.seeds.front(), r);

  VerifyResult result;
  std::vector<RunRecord> runs;
  try {
    runs = run_seeds(config, seeds, execution);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumerical) throw;
    result.rows.push_back({"sampler finite", std::nan(""), 0.0, false, e.what()});
    return result;
  }

  std::vector<std::vector<double>> xs;
  std::vector<double> w;
  for (const auto& run : runs) {
    const auto& r = run.result;
    if (o.use == "selected") {
      xs.push_back(flatten(r.particles[r.selected]));
      w.push_back(1.0);
    } else {
      double top = -std::numeric_limits<double>::infinity();
      for (double lw : r.log_weights) top = std::max(top, lw);
      double total = 0.0;
      std::vector<double> local(r.particles.size());
      for (std::size_t i = 0; i < local.size(); ++i) total += local[i] = std::exp(r.log_weights[i] - top);
      for (std::size_t i = 0; i < local.size(); ++i) {
        xs.push_back(flatten(r.particles[i]));
        w.push_back(local[i] / total);
      }
    }
  }
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= wsum;
  result.samples = xs.size();

  const auto add = [&](std::string name, double measured, double threshold, std::string detail) {
    result.rows.push_back({std::move(name), measured, threshold, measured <= threshold, std::move(detail)});
  };

  if (config.state.kind == "discrete") {
    const SliceGeometry geometry{config.state.num_slices, config.state.alphabet, config.state.slice_shape};
    const auto& probs = std::get<oracle::Table>(exact.representation()).probs;
    std::vector<double> empirical(probs.size(), 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      DiscreteState s(geometry);
      const std::size_t per = static_cast<std::size_t>(geometry.slice_shape);
      for (int k = 0; k < geometry.num_slices; ++k) {
        std::size_t code = 0;
        for (std::size_t q = 0; q < per; ++q) {
          code = code * static_cast<std::size_t>(geometry.alphabet) + static_cast<std::size_t>(xs[i][k * per + q]);
        }
        s.append(code);
      }
      empirical[sequence_index(s)] += w[i];
    }
    if (o.tv_max) {
      add("tv", oracle::tv_distance(empirical, probs), *o.tv_max,
          std::to_string(probs.size()) + " states, " + std::to_string(xs.size()) + " samples");
    }
    return result;
  }

  const Moments m = weighted_moments(xs, w);
  const Eigen::VectorXd ref_mean = exact.mean();
  const Eigen::MatrixXd ref_cov = exact.covariance();
  if (o.mean_tol) {
    for (Eigen::Index k = 0; k < m.mean.size(); ++k) {
      add("mean[" + std::to_string(k) + "]", std::abs(m.mean[k] - ref_mean[k]), *o.mean_tol,
          "estimate " + fmt(m.mean[k]) + ", exact " + fmt(ref_mean[k]));
    }
  }
  if (o.var_tol) {
    for (Eigen::Index k = 0; k < m.cov.rows(); ++k) {
      add("var[" + std::to_string(k) + "]", std::abs(m.cov(k, k) - ref_cov(k, k)), *o.var_tol,
          "estimate " + fmt(m.cov(k, k)) + ", exact " + fmt(ref_cov(k, k)));
    }
  }
  if (o.cov_rel_tol) {
    add("cov frobenius rel", (m.cov - ref_cov).norm() / ref_cov.norm(), *o.cov_rel_tol, "");
  }
  if (o.tv_max) {
    if (m.mean.size() != 1) config_error("oracle.tv_max", "binned TV is one-dimensional");
    std::vector<double> flat;
    for (const auto& x : xs) flat.push_back(x[0]);
    add("tv binned", oracle::tv_distance(flat, exact, static_cast<std::size_t>(o.bins), w), *o.tv_max,
        std::to_string(o.bins) + " equal-mass bins");
  }
  if (o.mode_tol) {
    double empirical = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) empirical += xs[i][0] > 0.0 ? w[i] : 0.0;
    double reference = 0.0;
    if (std::holds_alternative<oracle::Grid>(exact.representation()) || m.mean.size() == 1) {
      reference = exact.mass([](std::span<const double> x) { return x[0] > 0.0; });
    } else {
      config_error("oracle.mode_tol", "mode mass needs a grid or a one-dimensional oracle");
    }
    add("mass(x0>0)", std::abs(empirical - reference), *o.mode_tol,
        "estimate " + fmt(empirical) + ", exact " + fmt(reference));
  }
  return result;
}

void print_verify(std::ostream& out, const VerifyResult& result) {
  out << std::left << std::setw(20) << "check" << std::setw(14) << "measured" << std::setw(14) << "threshold"
      << std::setw(8) << "result"
      << "detail\n";
  for (const auto& r : result.rows) {
    out << std::left << std::setw(20) << r.name << std::setw(14) << fmt(r.measured) << std::setw(14)
        << ("<= " + fmt(r.threshold)) << std::setw(8) << (r.pass ? "PASS" : "FAIL") << r.detail << '\n';
  }
  out << (result.passed() ? "verify: PASS" : "verify: FAIL") << " (" << result.samples << " samples)\n";
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& axis,
                            const std::vector<std::string>& values, Execution execution) {
  if (!config::is_scalar_field(config, axis)) config_error("axis", "'" + axis + "' is not a scalar config field");
  if (values.empty()) config_error("values", "sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (const auto& value : values) {
    const ExperimentConfig point = config::with_overrides(config, {axis + "=" + value});
    const auto runs = run_seeds(point, point.seeds, execution);
    for (const auto& run : runs) {
      SweepRow row;
      row.value = value;
      row.seed = run.seed;
      row.selected_reward = run.result.selected_reward;
      double lo = static_cast<double>(point.smc.L);
      double sum = 0.0;
      for (const auto& s : run.result.stages) {
        lo = std::min(lo, s.ess);
        sum += s.ess;
      }
      row.ess_min = lo;
      row.ess_mean = run.result.stages.empty() ? lo : sum / static_cast<double>(run.result.stages.size());
      row.resamples = run.result.resample_events.size();
      row.wallclock_seconds = run.wallclock_seconds;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::string& axis, std::span<const SweepRow> rows) {
  out << axis << ",seed,selected_reward,ess_min,ess_mean,resamples,wallclock_seconds\n";
  for (const auto& r : rows) {
    out << r.value << ',' << r.seed << ',' << csv_number(r.selected_reward) << ',' << csv_number(r.ess_min) << ','
        << csv_number(r.ess_mean) << ',' << r.resamples << ',' << csv_number(r.wallclock_seconds) << '\n';
  }
}

std::filesystem::path default_benchmark_dir() {
  if (const char* env = std::getenv("POE_BENCHMARK_DIR")) return env;
  return POE_BENCHMARK_DIR;
}

std::vector<BenchmarkInfo> list_benchmarks(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    fail(ErrorKind::kInvalidConfig, "benchmark folder '" + dir.string() + "' does not exist");
  }
  std::vector<BenchmarkInfo> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    BenchmarkInfo info;
    info.path = entry.path();
    info.name = entry.path().stem().string();
    try {
      const auto c = config::load_config(entry.path());
      info.description = c.description;
    } catch (const Error& e) {
      info.description = std::string("invalid: ") + e.what();
    }
    out.push_back(std::move(info));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

}  // namespace poe::runner
