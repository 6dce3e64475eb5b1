#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "eigenclt/ensembles.hpp"
#include "eigenclt/models.hpp"
#include "eigenclt/sde_engine.hpp"
#include "eigenclt/stats.hpp"

namespace eigenclt {

enum class ExperimentKind { Simulate, Moments, CLT, Compare, Stationarity, Identity, OracleMatch };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

struct Numerics {
  double T = 1.0;
  double dt = 1e-3;
  double min_gap = 0.0;  // 0 selects the engine default
  int max_substeps = 20;
  double tame = 1.0;
  bool saturate = true;
  double moment_dt = 1e-3;
  std::vector<int> degrees{1, 2};
  int K = 6;  // moment curve degree for the Moments experiment

  StepControl control() const;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Simulate;
  ModelKind model_kind = ModelKind::Dyson;
  int n_particles = 1;
  ParamMap params;
  InitialKind initial_kind = InitialKind::Zero;
  InitialParams initial;
  Numerics numerics;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  // The parsed document, echoed into the report and read for the
  // experiment-specific sections.
  nlohmann::json raw;

  ModelSpec model() const { return build_model(model_kind, n_particles, params); }
};

// Validates the document; ConfigError names the first offending key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_json(const nlohmann::json& doc);

struct RunOptions {
  int threads = 0;  // 0 = library default
  std::string out_dir;  // overrides output.dir when non-empty
  bool write_outputs = true;
};

struct RunReport {
  std::string experiment;
  nlohmann::json config;
  std::vector<TestReport> checks;
  nlohmann::json results = nlohmann::json::object();
  bool pass = true;
  double wall_seconds = 0.0;
  double replicas_per_second = 0.0;
  int threads = 1;
};

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Deterministic document: sorted keys, no timing fields.
nlohmann::json report_to_json(const RunReport& report);
nlohmann::json timing_to_json(const RunReport& report);
// Writes report.json and timing.json into dir.
void write_report(const RunReport& report, const std::string& dir);

// Runs body(r) for r in [0, count) on a pool of the given size. Exceptions
// from replicas are rethrown for the lowest failing index, tagged with the
// index and the seed.
void parallel_replicas(std::size_t count, int threads, std::uint64_t seed,
                       const std::function<void(std::size_t)>& body);

}  // namespace eigenclt
