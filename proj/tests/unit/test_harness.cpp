#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "eigenclt/error.hpp"
#include "eigenclt/harness.hpp"

using namespace eigenclt;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "experiment": "simulate",
    "seed": 3,
    "replicas": 2,
    "model": {"kind": "Dyson", "n_particles": 5},
    "initial": {"kind": "Ensemble"},
    "numerics": {"T": 0.1}
  })");
}

std::string config_error_of(const json& doc) {
  try {
    parse_config_json(doc);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  FAIL("config accepted");
  return {};
}

// Messages read "ConfigError: <key path>[: reason]".
bool starts_with(const std::string& s, const std::string& p) {
  return s.rfind("ConfigError: " + p, 0) == 0;
}

RunOptions quiet(int threads = 1) {
  RunOptions o;
  o.threads = threads;
  o.write_outputs = false;
  return o;
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  const auto cfg = parse_config(minimal().dump());
  CHECK(cfg.experiment == ExperimentKind::Simulate);
  CHECK(cfg.numerics.dt == 1e-3);
  CHECK(cfg.numerics.min_gap == 0.0);
  CHECK(cfg.numerics.control().min_gap == 0.0);  // engine default rule
  CHECK(cfg.numerics.max_substeps == 20);
  CHECK(cfg.replicas == 2);
  CHECK(cfg.seed == 3);
  CHECK(cfg.model().n_particles == 5);
}

TEST_CASE("config errors name the offending key") {
  auto doc = minimal();
  doc.erase("seed");
  CHECK(starts_with(config_error_of(doc), "seed"));

  doc = minimal();
  doc["model"]["n_particles"] = 0;
  CHECK(starts_with(config_error_of(doc), "model.n_particles"));

  doc = minimal();
  doc["numerics"]["dtt"] = 0.1;
  CHECK(starts_with(config_error_of(doc), "numerics.dtt"));

  doc = minimal();
  doc["seed"] = -1;
  CHECK(starts_with(config_error_of(doc), "seed"));

  doc = minimal();
  doc["experiment"] = "bake";
  CHECK(starts_with(config_error_of(doc), "experiment"));

  doc = minimal();
  doc["model"]["kind"] = "Wishart";
  doc["model"]["params"] = {{"P", 2}};
  CHECK(config_error_of(doc).find("model") != std::string::npos);

  CHECK_THROWS_AS(parse_config("{not json"), Error);
}

TEST_CASE("experiment names round-trip") {
  for (auto k : {ExperimentKind::Simulate, ExperimentKind::Moments, ExperimentKind::CLT,
                 ExperimentKind::Compare, ExperimentKind::Stationarity, ExperimentKind::Identity,
                 ExperimentKind::OracleMatch})
    CHECK(parse_experiment_kind(to_string(k)) == k);
}

TEST_CASE("parallel replicas run every index once") {
  std::vector<std::atomic<int>> hits(100);
  parallel_replicas(100, 4, 1, [&](std::size_t r) { hits[r]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("replica errors carry the lowest failing index and the seed") {
  try {
    parallel_replicas(50, 4, 1234, [](std::size_t r) {
      if (r == 17 || r == 31) fail(ErrorCode::NonFinite, "boom");
    });
    FAIL("no error");
  } catch (const Error& e) {
    const std::string w = e.what();
    CHECK(e.code() == ErrorCode::NonFinite);
    CHECK(w.find("17") != std::string::npos);
    CHECK(w.find("1234") != std::string::npos);
  }
}

TEST_CASE("reports are deterministic and thread-count independent") {
  auto doc = minimal();
  doc["experiment"] = "clt";
  doc["replicas"] = 40;
  doc["numerics"] = {{"T", 0.2}, {"dt", 0.01}, {"degrees", {1, 2}}};
  doc["initial"] = {{"kind", "Zero"}};
  doc["clt"] = {{"bootstrap", 50}, {"recursion_draws", 500}, {"recursion_step", 0.02}};
  const auto cfg = parse_config_json(doc);
  const auto a = report_to_json(run_experiment(cfg, quiet(1))).dump();
  const auto b = report_to_json(run_experiment(cfg, quiet(1))).dump();
  const auto c = report_to_json(run_experiment(cfg, quiet(3))).dump();
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a.find("wall") == std::string::npos);
}

TEST_CASE("report keys are sorted and the summary reflects mandatory checks") {
  RunReport r;
  r.experiment = "simulate";
  r.config = json::object();
  TestReport ok;
  ok.name = "ok";
  TestReport info;
  info.name = "info";
  info.pass = false;
  info.mandatory = false;
  r.checks = {ok, info};
  r.pass = true;
  const auto j = report_to_json(r);
  CHECK(j["summary"]["pass"] == true);
  std::string prev;
  for (auto it = j.begin(); it != j.end(); ++it) {
    CHECK(prev < it.key());
    prev = it.key();
  }
}

TEST_CASE("moments experiment matches closed forms") {
  auto doc = minimal();
  doc["experiment"] = "moments";
  doc["initial"] = {{"kind", "Zero"}};
  doc["numerics"] = {{"T", 1.0}, {"K", 6}};
  const auto rep = run_experiment(parse_config_json(doc), quiet());
  CHECK(rep.pass);
  bool found = false;
  for (const auto& c : rep.checks)
    if (c.name == "closed_form_max_error") {
      found = true;
      CHECK(c.statistic < 1e-6);
    }
  CHECK(found);
}

TEST_CASE("compare with equal drifts is flagged degenerate") {
  auto doc = minimal();
  doc["experiment"] = "compare";
  doc["model"] = {{"kind", "DysonDrifted"}, {"n_particles", 6}, {"params", {{"c", 0.5}}}};
  doc["numerics"] = {{"T", 0.2}, {"dt", 0.01}};
  doc["compare"] = {{"seeds", 5}};
  const auto rep = run_experiment(parse_config_json(doc), quiet());
  CHECK(rep.pass);
  CHECK(rep.results.at("flag") == "degenerate: equal drifts");
  for (const auto& c : rep.checks)
    if (c.name == "ordering_clean_seed_fraction") CHECK(c.statistic == 1.0);
}

TEST_CASE("compare rejects the collided start") {
  auto doc = minimal();
  doc["experiment"] = "compare";
  doc["initial"] = {{"kind", "Zero"}};
  CHECK_THROWS_AS(run_experiment(parse_config_json(doc), quiet()), Error);
}

TEST_CASE("outputs are written") {
  const auto dir = std::filesystem::temp_directory_path() / "eigenclt_harness_test";
  std::filesystem::remove_all(dir);
  RunOptions o;
  o.threads = 1;
  o.out_dir = dir.string();
  const auto rep = run_experiment(parse_config_json(minimal()), o);
  write_report(rep, dir.string());
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "timing.json"));
  CHECK(std::filesystem::exists(dir / "trajectory_0.csv"));
  std::ifstream in(dir / "report.json");
  const auto j = json::parse(in);
  CHECK(j.at("experiment") == "simulate");
  std::filesystem::remove_all(dir);
}
