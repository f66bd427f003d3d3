#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poe/config.hpp"
#include "poe/parallel.hpp"
#include "poe/smc.hpp"

namespace poe::runner {

struct BuiltExperiment {
  std::unique_ptr<ProductModel> model;
  SmcOptions smc;
};

/// Instantiates experts, schedule and SMC settings. Construction failures
/// surface as kInvalidConfig naming the offending section.
BuiltExperiment build(const config::ExperimentConfig& config, Execution execution = Execution::kParallel);

struct RunRecord {
  std::uint64_t seed = 0;
  SmcResult result;
  double wallclock_seconds = 0.0;
};

RunRecord run_seed(const BuiltExperiment& built, std::uint64_t seed);

/// One SMC run per seed. Seeds run concurrently under kParallel; results are
/// identical either way.
std::vector<RunRecord> run_seeds(const config::ExperimentConfig& config, std::span<const std::uint64_t> seeds,
                                 Execution execution);

/// Wall-clock entries are named "wallclock_seconds"; everything else is a
/// pure function of the config and seeds.
config::Json make_report(const config::ExperimentConfig& config, std::span<const RunRecord> runs);

/// report.json, samples.csv and diagnostics.csv in `dir`.
void write_outputs(const std::filesystem::path& dir, const config::ExperimentConfig& config,
                   std::span<const RunRecord> runs);

struct CheckRow {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

struct VerifyResult {
  std::vector<CheckRow> rows;
  std::size_t samples = 0;
  bool passed() const;
};

/// Runs the sampler `oracle.runs` times and compares against the declared
/// oracle. Throws kInvalidConfig when the config has no oracle. A sampler
/// that produces non-finite states yields a failing row.
VerifyResult verify(const config::ExperimentConfig& config, Execution execution);
void print_verify(std::ostream& out, const VerifyResult& result);

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  double selected_reward = 0.0;
  double ess_min = 0.0;
  double ess_mean = 0.0;
  std::size_t resamples = 0;
  double wallclock_seconds = 0.0;
};

/// One run per value per seed. Throws kInvalidConfig unless `axis` names a
/// scalar config field.
std::vector<SweepRow> sweep(const config::ExperimentConfig& config, const std::string& axis,
                            const std::vector<std::string>& values, Execution execution);
void write_sweep_csv(std::ostream& out, const std::string& axis, std::span<const SweepRow> rows);

struct BenchmarkInfo {
  std::string name;
  std::string description;
  std::filesystem::path path;
};

std::filesystem::path default_benchmark_dir();
std::vector<BenchmarkInfo> list_benchmarks(const std::filesystem::path& dir);

}  // namespace poe::runner
