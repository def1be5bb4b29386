#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "advrep/harness.hpp"

using namespace advrep;

int main(int argc, char** argv) {
  CLI::App app{"harness: abuse scenarios against the reporting service"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "run a scenario or all of them");
  std::string scenario;
  std::uint64_t seed = 1;
  std::string service_url;
  std::string report_path;
  run->add_option("scenario", scenario, "scenario name or 'all'")->required();
  run->add_option("--seed", seed, "fixture and interleaving seed");
  run->add_option("--service", service_url, "target service URL (default: fresh in-process service)");
  run->add_option("--report", report_path, "write a JUnit XML report");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> names;
  if (scenario == "all") {
    names = harness::scenario_names();
  } else if (std::find(harness::scenario_names().begin(), harness::scenario_names().end(), scenario) !=
             harness::scenario_names().end()) {
    names = {scenario};
  } else {
    std::cerr << "unknown scenario '" << scenario << "'; known:";
    for (const auto& n : harness::scenario_names()) std::cerr << " " << n;
    std::cerr << "\n";
    return 2;
  }

  try {
    std::unique_ptr<harness::InProcessService> local;
    if (service_url.empty()) {
      local = std::make_unique<harness::InProcessService>(seed);
      service_url = local->url();
    }
    harness::Harness h(service_url, seed);
    std::vector<harness::ScenarioResult> results;
    bool all_passed = true;
    for (const auto& n : names) {
      results.push_back(h.run(n));
      harness::print(std::cout, results.back());
      all_passed = all_passed && results.back().passed();
    }
    std::cout << "audit head " << h.audit_head() << "\n";
    std::cout << (all_passed ? "ALL PASSED" : "FAILURES") << "\n";
    if (!report_path.empty()) std::ofstream(report_path) << harness::junit_xml(results);
    return all_passed ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "harness: " << e.what() << "\n";
    return 2;
  }
}
