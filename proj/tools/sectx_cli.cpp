#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sectx.h"

namespace {

/// Prints the report (minus the trace, which goes to its own file when
/// requested) and maps the library status to the process exit code:
/// 0 clean, 1 violations, 2 anything that kept the analysis from running.
int finish(int status, char* report_json, const std::string& trace_path) {
  if (report_json) {
    if (!trace_path.empty()) {
      auto report = nlohmann::json::parse(report_json);
      if (report.contains("trace")) {
        std::ofstream out(trace_path);
        out << report["trace"].dump(2) << "\n";
        report.erase("trace");
      }
      std::cout << report.dump(2) << "\n";
    } else {
      std::cout << report_json << "\n";
    }
    sectx_string_free(report_json);
  }
  if (status == SECTX_OK || status == SECTX_VIOLATIONS) return status;
  std::cerr << "error: " << sectx_last_error() << "\n";
  return 2;
}

struct ScenarioHandle {
  sectx_scenario* s = nullptr;
  ~ScenarioHandle() { sectx_scenario_close(s); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-flow-secure transaction scheduling toolkit"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string protocol;
  std::string variant;
  std::string observer;
  std::string attacker = "Attacker";
  std::string trace_path;
  uint64_t seed = 1;
  int trials = 200;
  int seeds = 100;
  int bound = 0;
  bool metrics = false;

  auto add_scenario = [&](CLI::App* cmd) {
    cmd->add_option("scenario", scenario_path, "scenario JSON file")
        ->required();
  };

  auto* check = app.add_subcommand("check", "static information-flow checks");
  add_scenario(check);

  auto* run = app.add_subcommand("run", "one simulated execution");
  add_scenario(run);
  run->add_option("--protocol", protocol, "2pc, locks or sc");
  run->add_option("--seed", seed, "random seed");
  run->add_option("--variant", variant, "secret variant to apply");
  run->add_option("--trace", trace_path, "write the event trace to a file");
  run->add_flag("--metrics", metrics, "include protocol metrics");

  auto* attack = app.add_subcommand("attack-demo", "abort-channel probe");
  add_scenario(attack);
  attack->add_option("--protocol", protocol, "2pc, locks or sc");
  attack->add_option("--attacker", attacker, "observing principal");
  attack->add_option("--trials", trials, "seeds per secret variant");

  auto* rod = app.add_subcommand("rod",
                                 "relaxed observational determinism check");
  add_scenario(rod);
  rod->add_option("--protocol", protocol, "2pc, locks or sc");
  rod->add_option("--observer", observer, "observing principal")->required();
  rod->add_option("--seeds", seeds, "matched seeds to compare");

  auto* explore = app.add_subcommand("explore", "exhaustive analyses");
  add_scenario(explore);
  explore->add_option("--protocol", protocol, "2pc, locks, sc or broken");
  explore->add_option("--bound", bound, "input events per transaction");

  CLI11_PARSE(app, argc, argv);

  ScenarioHandle h;
  h.s = sectx_scenario_open(scenario_path.c_str());
  if (!h.s) {
    std::cerr << "error: " << sectx_last_error() << "\n";
    return 2;
  }

  char* report = nullptr;
  int status = SECTX_INTERNAL;
  if (check->parsed()) {
    status = sectx_check(h.s, &report);
  } else if (run->parsed()) {
    status = sectx_run(h.s, protocol.c_str(), variant.c_str(), seed,
                       trace_path.empty() ? 0 : 1, metrics ? 1 : 0, &report);
  } else if (attack->parsed()) {
    status = sectx_attack_demo(h.s, protocol.c_str(), attacker.c_str(), trials,
                               &report);
  } else if (rod->parsed()) {
    status = sectx_rod(h.s, protocol.c_str(), observer.c_str(), seeds,
                       &report);
  } else if (explore->parsed()) {
    status = sectx_explore(h.s, protocol.c_str(), bound, &report);
  }
  return finish(status, report, trace_path);
}
