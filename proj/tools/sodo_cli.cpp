// Command-line front end: run a scenario, print its constants, or merge
// several runs into one error-vs-time CSV.

#include "sodo/run.hpp"
#include "sodo/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kConfigExit = 2;

sodo::Scenario resolve(const std::string& config, const std::string& preset, std::optional<std::uint64_t> seed) {
  sodo::json doc = config.empty() ? sodo::json::object() : sodo::read_json_file(config);
  if (!preset.empty()) doc["preset"] = preset;
  if (!doc.contains("preset") && config.empty()) throw sodo::ConfigError("give a config file or --preset");
  if (seed) {
    doc["initial"]["random"]["seed"] = *seed;
    doc["initial"]["x"] = nullptr;
  }
  return sodo::scenario_from_json(std::move(doc));
}

void print_report(const sodo::RunReport& r) {
  std::cout << "scenario " << r.scenario << " (" << sodo::to_string(r.algorithm) << "): " << r.status << '\n';
  if (r.status == "diverged") {
    std::cout << "  " << r.error << '\n';
  } else {
    std::cout << "  terminal error max_i ||x_i - x*|| = " << r.terminal_error << '\n'
              << "  consensus residual                = " << r.consensus_residual << '\n';
    if (r.fit) std::cout << "  fitted rate                       = " << r.fit->rate << '\n';
    if (r.triggers) {
      std::cout << "  triggers:";
      for (const auto& a : r.triggers->agents) std::cout << ' ' << a.count;
      std::cout << " (ratio " << r.triggers->trigger_ratio << ")\n";
    }
    for (const auto& c : r.checks) {
      std::cout << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name << " worst=" << c.worst << '\n';
    }
  }
  for (const auto& [k, v] : r.files) std::cout << "  " << k << ": " << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Second-order distributed optimization simulator"};
  app.require_subcommand(1);

  std::string run_config, run_preset, run_out;
  std::optional<std::uint64_t> run_seed;
  auto* run_cmd = app.add_subcommand("run", "Integrate one scenario and write its output files");
  run_cmd->add_option("config", run_config, "scenario JSON file");
  run_cmd->add_option("--out", run_out, "output directory (overrides SODO_OUT_DIR)");
  run_cmd->add_option("--seed", run_seed, "seed for the random initial state");
  run_cmd->add_option("--preset", run_preset, "built-in preset used as the base configuration");

  std::string const_config, const_preset;
  auto* const_cmd = app.add_subcommand("constants", "Print the convergence constants as JSON");
  const_cmd->add_option("config", const_config, "scenario JSON file");
  const_cmd->add_option("--preset", const_preset, "built-in preset");

  std::vector<std::string> cmp_configs;
  std::string cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Run several scenarios and merge their error curves");
  cmp_cmd->add_option("configs", cmp_configs, "scenario JSON files")->required();
  cmp_cmd->add_option("--out", cmp_out, "output directory (overrides SODO_OUT_DIR)");

  app.add_subcommand("presets", "List the built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const sodo::Scenario s = resolve(run_config, run_preset, run_seed);
      const auto dir = sodo::resolve_out_dir(run_out.empty() ? std::nullopt : std::optional(run_out), s.name);
      const sodo::RunReport r = sodo::run(s, {dir});
      print_report(r);
      return r.exit_code();
    }
    if (*const_cmd) {
      const sodo::Scenario s = resolve(const_config, const_preset, std::nullopt);
      const auto x = sodo::minimizer_oracle(s.objective).x;
      std::cout << sodo::constants_json(s, sodo::compute_constants(s, x, s.initial_state())).dump(2) << '\n';
      return 0;
    }
    if (*cmp_cmd) {
      std::vector<sodo::Scenario> scenarios;
      for (const auto& c : cmp_configs) scenarios.push_back(sodo::load_scenario(c));
      const auto dir = sodo::resolve_out_dir(cmp_out.empty() ? std::nullopt : std::optional(cmp_out), "compare");
      const auto res = sodo::compare(scenarios, dir);
      int code = 0;
      for (const auto& r : res.reports) code = std::max(code, r.status == "diverged" ? 3 : 0);
      std::cout << "wrote " << res.csv->string() << " (columns: t";
      for (const auto& c : res.columns) std::cout << ", " << c;
      std::cout << ")\n";
      return code;
    }
    for (const auto& n : sodo::presets::names()) std::cout << n << '\n';
    return 0;
  } catch (const sodo::HypothesisViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
