// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: campaign runs, single-fault runs, trace windows and
// error classification lookups.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "pcie_sim/harness.hpp"

using namespace pcie_sim;

namespace {

constexpr int kPass = 0;
constexpr int kViolation = 1;
constexpr int kUsage = 2;

int report_and_exit(const CampaignConfig& config, const CampaignReport& report) {
  if (!config.report_path) std::cout << report.to_json().dump(2) << '\n';
  if (report.passed()) return kPass;
  std::cerr << "campaign violated an invariant (see report)\n";
  return kViolation;
}

int cmd_run(const std::string& path) {
  const CampaignConfig config = load_config(path);
  return report_and_exit(config, run_campaign(config));
}

int cmd_inject(const std::string& kind_name, std::uint64_t cycle, std::uint64_t seed, const std::string& mode,
               const std::string& trace_path) {
  auto kind = fault_kind_from_string(kind_name);
  if (!kind) throw ConfigError("unknown fault kind '" + kind_name + "'");
  CampaignConfig config;
  config.seed = seed;
  if (mode == "baseline") config.mode = RecoveryMode::Baseline;
  config.horizon_cycles = cycle + 1;
  SplitMix64 rng(seed);
  FaultSpec spec;
  spec.cycle = cycle;
  spec.kind = *kind;
  spec.param = rng.next();
  spec.seed = rng.next();
  config.faults = {spec};
  if (!trace_path.empty()) config.trace_path = trace_path;

  const CampaignRun run = execute_campaign(config);
  if (config.trace_path) {
    std::ofstream out(*config.trace_path, std::ios::binary | std::ios::trunc);
    emit_trace(run.sim->trace(), out);
  }
  std::cout << format_fault_line(spec) << '\n';
  for (const MutationRecord& m : run.sim->mutations())
    std::cout << "applied cycle=" << m.cycle << " " << m.what << " " << m.golden_value << "->" << m.mutated_value
              << '\n';
  for (const ErrorEvent& e : run.sim->events())
    std::cout << "event cycle=" << e.cycle << " kind=" << to_string(e.kind) << " layer=" << to_string(e.layer())
              << " severity=" << to_string(e.severity()) << " detail=\"" << e.detail << "\"\n";
  for (const RecoveryRecord& r : run.sim->recoveries())
    std::cout << "recovery raised=" << r.raised_cycle << " accepted=" << r.accepted_cycle
              << " corrected=" << r.corrected_cycle << " bytes=" << r.bytes_corrected << '\n';
  return report_and_exit(config, run.report);
}

int cmd_trace(const std::string& path, std::uint64_t from, std::uint64_t to) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path);
  std::string line;
  while (std::getline(in, line)) {
    auto p = parse_trace_line(line);
    if (!p) throw ConfigError("not a trace line: " + line);
    if (p->cycle > to) break;
    if (p->cycle >= from) std::cout << line << '\n';
  }
  return kPass;
}

int cmd_classify(const std::string& name) {
  auto kind = error_kind_from_string(name);
  if (!kind) throw ConfigError("unknown error kind '" + name + "'");
  const Classification c = classify(*kind);
  std::cout << to_string(*kind) << ' ' << to_string(c.layer) << ' ' << to_string(c.severity) << '\n';
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-level link simulator with fault injection and on-the-fly recovery"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run a campaign from a config file");
  run->add_option("--config", config_path, "key=value config file")->required();

  std::string kind;
  std::uint64_t cycle = 0;
  std::uint64_t seed = 1;
  std::string mode = "proposed";
  std::string trace_out;
  auto* inject = app.add_subcommand("inject", "Run with a single fault");
  inject->add_option("--kind", kind, "fault kind")->required();
  inject->add_option("--cycle", cycle, "injection cycle")->required();
  inject->add_option("--seed", seed, "seed")->required();
  inject->add_option("--mode", mode, "proposed or baseline")->check(CLI::IsMember({"proposed", "baseline"}));
  inject->add_option("--trace", trace_out, "write the trace here");

  std::string input;
  std::uint64_t from = 0;
  std::uint64_t to = ~std::uint64_t{0};
  auto* trace = app.add_subcommand("trace", "Print a cycle window of a trace file");
  trace->add_option("--input", input, "trace file")->required();
  trace->add_option("--from", from, "first cycle");
  trace->add_option("--to", to, "last cycle");

  std::string error_kind;
  auto* cls = app.add_subcommand("classify", "Print the layer and severity of an error kind");
  cls->add_option("--kind", error_kind, "error kind")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kUsage;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*inject) return cmd_inject(kind, cycle, seed, mode, trace_out);
    if (*trace) return cmd_trace(input, from, to);
    if (*cls) return cmd_classify(error_kind);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
