// Command line front end: one subcommand per experiment kind.
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/harness.hpp"

namespace {

int run(eigenclt::ExperimentKind kind, const std::string& path, const std::string& out,
        int threads) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read " << path << '\n';
    return 2;
  }
  std::stringstream text;
  text << in.rdbuf();
  auto doc = nlohmann::json::parse(text.str(), nullptr, false);
  if (doc.is_discarded()) {
    std::cerr << "error: ConfigError: " << path << " is not valid JSON\n";
    return 2;
  }
  if (doc.is_object() && !doc.contains("experiment"))
    doc["experiment"] = std::string(eigenclt::to_string(kind));
  const auto cfg = eigenclt::parse_config_json(doc);
  if (cfg.experiment != kind)
    eigenclt::fail(eigenclt::ErrorCode::ConfigError,
                   "experiment: config is '" + std::string(eigenclt::to_string(cfg.experiment)) +
                       "' but the command is '" + std::string(eigenclt::to_string(kind)) + "'");

  eigenclt::RunOptions opts;
  opts.threads = threads;
  opts.out_dir = out;
  const auto report = eigenclt::run_experiment(cfg, opts);
  for (const auto& c : report.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << (c.mandatory ? "" : "(info) ") << c.name
              << "  statistic=" << c.statistic << "  p=" << c.p_value << '\n';
  std::cout << "summary: " << (report.pass ? "PASS" : "FAIL") << "  ("
            << report.wall_seconds << " s)\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenvalue particle system CLT lab"};
  app.require_subcommand(1);
  std::string config, out;
  int threads = 0;

  using eigenclt::ExperimentKind;
  const std::pair<const char*, ExperimentKind> commands[] = {
      {"simulate", ExperimentKind::Simulate},
      {"moments", ExperimentKind::Moments},
      {"clt", ExperimentKind::CLT},
      {"compare", ExperimentKind::Compare},
      {"stationarity", ExperimentKind::Stationarity},
      {"identity", ExperimentKind::Identity},
      {"oracle-match", ExperimentKind::OracleMatch},
  };
  std::vector<std::pair<CLI::App*, ExperimentKind>> subs;
  for (const auto& [name, kind] : commands) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker threads (default: all cores)")
        ->check(CLI::NonNegativeNumber);
    subs.emplace_back(sub, kind);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [sub, kind] : subs)
      if (sub->parsed()) return run(kind, config, out, threads);
  } catch (const eigenclt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
