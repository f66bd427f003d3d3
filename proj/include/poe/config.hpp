#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace poe::config {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;
using Matrix = std::vector<std::vector<double>>;

struct GaussianParams {
  std::vector<double> mean;
  Matrix cov;
  bool operator==(const GaussianParams&) const = default;
};

struct GmmParams {
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<Matrix> covs;
  bool operator==(const GmmParams&) const = default;
};

/// Explicit conditional tables, inline (`levels`) or from a JSON file with
/// the same `levels` field. File paths resolve against the config's folder.
struct TabularParams {
  std::vector<std::vector<double>> levels;
  std::string file;
  bool operator==(const TabularParams&) const = default;
};

struct RandomTabularParams {
  double concentration = 1.0;
  std::uint64_t seed = 0;
  bool markov = false;  // first-order Markov tables instead of one draw per prefix
  bool operator==(const RandomTabularParams&) const = default;
};

struct UniformArParams {
  bool operator==(const UniformArParams&) const = default;
};

using ExpertParams = std::variant<GaussianParams, GmmParams, TabularParams, RandomTabularParams, UniformArParams>;

struct ExpertDecl {
  std::string name;
  ExpertParams params;
  std::vector<long> region;    // continuous only; empty = whole state
  std::vector<double> weight;  // empty = 1 / cover
  std::string jacobian = "analytic";
  double fd_step = 1e-4;
  bool operator==(const ExpertDecl&) const = default;
};

struct LinearParams {
  std::vector<double> a;
  bool operator==(const LinearParams&) const = default;
};

struct QuadraticParams {
  Matrix A;
  std::vector<double> b;
  bool operator==(const QuadraticParams&) const = default;
};

/// sharpness * 1[normal^T x > offset], or a hard constraint.
struct IndicatorParams {
  std::vector<double> normal;
  double offset = 0.0;
  double sharpness = 1.0;
  bool hard = false;
  bool operator==(const IndicatorParams&) const = default;
};

using RewardParams = std::variant<LinearParams, QuadraticParams, IndicatorParams>;

struct RewardDecl {
  std::string name;
  RewardParams params;
  bool operator==(const RewardDecl&) const = default;
};

struct StateDecl {
  std::string kind = "continuous";  // continuous | discrete
  long dim = 1;
  int num_slices = 1;
  int alphabet = 2;
  int slice_shape = 1;
  bool operator==(const StateDecl&) const = default;
};

struct ScheduleDecl {
  int T = 100;
  std::string grid = "uniform";
  std::string path = "linear";
  int K = 1;
  std::string kappa_rule = "sigma_proportional";  // sigma_proportional | constant
  double kappa_scale = 0.5;
  double kappa_floor = 1e-3;
  std::string mcmc = "ula";
  double score_time_ceiling = 1.0 - 1e-4;
  std::string sweep_order = "sequential";
  std::string append = "sample";  // sample | argmax
  bool operator==(const ScheduleDecl&) const = default;
};

struct SmcDecl {
  long L = 1;
  std::string resample = "ess";  // ess | every_stage | checkpoints | never; on = ess, off = never
  double ess_fraction = 0.5;
  std::vector<int> checkpoints;
  bool binarize = false;
  std::string scheme = "systematic";
  std::string weight_mode = "full";
  bool operator==(const SmcDecl&) const = default;
};

struct ConditionalDecl {
  std::map<std::string, std::vector<std::string>> parents;
  double w = 0.1;
  int num_updates = 2;
  bool operator==(const ConditionalDecl&) const = default;
};

/// Reference distribution for `verify`. kind: gaussian (closed form of
/// Gaussian experts with linear or quadratic rewards), grid (quadrature of
/// the expert densities times exp(reward), 1D or 2D) or enumeration
/// (discrete products). Each threshold that is set yields one check.
struct OracleDecl {
  std::string kind = "gaussian";
  long runs = 1000;
  std::string use = "selected";  // selected | population
  std::vector<double> lower;
  std::vector<double> upper;
  long points = 2048;
  long bins = 50;
  std::optional<double> mean_tol;
  std::optional<double> var_tol;
  std::optional<double> cov_rel_tol;
  std::optional<double> tv_max;
  std::optional<double> mode_tol;
  bool operator==(const OracleDecl&) const = default;
};

struct ExperimentConfig {
  int version = kSchemaVersion;
  std::string name;
  std::string description;
  StateDecl state;
  std::vector<ExpertDecl> experts;
  std::vector<RewardDecl> rewards;
  ScheduleDecl schedule;
  SmcDecl smc;
  ConditionalDecl conditional;
  std::optional<OracleDecl> oracle;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";
  std::filesystem::path base_dir;  // folder of the config file, not serialized
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates. Throws Error(kInvalidConfig) naming the field
/// path, or line:column for syntax errors.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                              std::string_view source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full serialization with every default spelled out.
Json to_json(const ExperimentConfig& config);
ExperimentConfig from_json(const Json& json, const std::filesystem::path& base_dir = {});

/// `key=value` with a dotted key (array elements by index, e.g.
/// experts.0.mean). The value is read as JSON when it parses, otherwise as
/// a string.
void apply_override(Json& json, std::string_view assignment);
ExperimentConfig with_overrides(const ExperimentConfig& config, const std::vector<std::string>& overrides);

/// Whether `dotted` names a scalar field of the normalized config.
bool is_scalar_field(const ExperimentConfig& config, std::string_view dotted);

}  // namespace poe::config
