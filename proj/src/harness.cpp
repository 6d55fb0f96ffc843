// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace pcie_sim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc{} || p != value.data() + value.size())
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  return out;
}

constexpr std::uint64_t kTrafficPeriod = 8;
constexpr std::size_t kWriteBytes = 64;
constexpr std::uint16_t kReadDw = 16;
constexpr std::uint64_t kTrafficSalt = 0x7472'6166'6669'6300ull;

}  // namespace

CampaignConfig parse_config(std::istream& in) {
  CampaignConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find_first_of("#;")));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "mode") {
      if (value == "proposed")
        c.mode = RecoveryMode::Proposed;
      else if (value == "baseline")
        c.mode = RecoveryMode::Baseline;
      else
        throw ConfigError("mode must be proposed or baseline, got '" + value + "'");
    } else if (key == "horizon_cycles") {
      c.horizon_cycles = parse_number<std::uint64_t>(key, value);
    } else if (key == "count_per_kind") {
      c.count_per_kind = parse_number<std::uint32_t>(key, value);
    } else if (key == "snapshot_interval") {
      c.snapshot_interval = parse_number<std::uint64_t>(key, value);
      if (c.snapshot_interval == 0) throw ConfigError("snapshot_interval must be positive");
    } else if (key == "retrain_cost") {
      c.retrain_cost = parse_number<std::uint64_t>(key, value);
    } else if (key == "completion_timeout_cycles") {
      c.completion_timeout_cycles = parse_number<std::uint64_t>(key, value);
    } else if (key == "replay_timeout_cycles") {
      c.replay_timeout_cycles = parse_number<std::uint64_t>(key, value);
      if (c.replay_timeout_cycles == 0) throw ConfigError("replay_timeout_cycles must be positive");
    } else if (key == "trace_path") {
      c.trace_path = value;
    } else if (key == "report_path") {
      c.report_path = value;
    } else if (key == "kinds") {
      std::stringstream ss(value);
      std::string name;
      while (std::getline(ss, name, ',')) {
        auto k = fault_kind_from_string(trim(name));
        if (!k) throw ConfigError("unknown fault kind '" + trim(name) + "'");
        c.kinds.push_back(*k);
      }
    } else if (key == "fault") {
      auto f = parse_fault_value(value);
      if (!f) throw ConfigError("line " + std::to_string(lineno) + ": bad fault entry '" + value + "'");
      c.faults.push_back(*f);
    } else if (key == "traffic_tail_cycles") {
      c.traffic_tail_cycles = parse_number<std::uint64_t>(key, value);
    } else if (key == "drain_limit_cycles") {
      c.drain_limit_cycles = parse_number<std::uint64_t>(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (c.horizon_cycles == 0) throw ConfigError("horizon_cycles must be positive");
  return c;
}

CampaignConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

SimConfig sim_config_for(const CampaignConfig& c) {
  SimConfig s;
  s.mode = c.mode;
  s.snapshot_interval = c.snapshot_interval;
  s.retrain_cost = c.retrain_cost;
  s.completion_timeout_cycles = c.completion_timeout_cycles;
  s.replay_timeout_cycles = c.replay_timeout_cycles;
  return s;
}

std::vector<FaultSpec> campaign_faults(const CampaignConfig& c) {
  if (!c.faults.empty()) return c.faults;
  std::vector<FaultSpec> all;
  try {
    all = gen_campaign(c.seed, c.count_per_kind, c.horizon_cycles);
  } catch (const HorizonTooSmall& e) {
    throw ConfigError(e.what());
  }
  if (c.kinds.empty()) return all;
  std::erase_if(all, [&](const FaultSpec& f) { return std::find(c.kinds.begin(), c.kinds.end(), f.kind) == c.kinds.end(); });
  return all;
}

CampaignRun execute_campaign(const CampaignConfig& config, const std::function<void(const Simulator&)>& observer) {
  CampaignRun run;
  run.sim = std::make_unique<Simulator>(sim_config_for(config));
  Simulator& sim = *run.sim;
  sim.schedule_faults(campaign_faults(config));

  SplitMix64 traffic(config.seed ^ kTrafficSalt);
  std::uint64_t write_cursor = 0;
  const std::uint64_t traffic_end = config.horizon_cycles + config.traffic_tail_cycles;

  while (sim.now() < traffic_end) {
    if (sim.now() % kTrafficPeriod == 0 && sim.link().ltssm == Ltssm::L0) {
      Request r;
      const bool write = write_cursor == 0 || traffic.below(100) < 70;
      if (write) {
        r.kind = TlpKind::MemWr;
        r.address = write_cursor;
        r.payload.resize(kWriteBytes);
        for (std::size_t i = 0; i < kWriteBytes; i += 8) {
          const std::uint64_t v = traffic.next();
          for (std::size_t b = 0; b < 8; ++b) r.payload[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
        }
        write_cursor += kWriteBytes;
      } else {
        r.kind = TlpKind::MemRd;
        r.address = kWriteBytes * traffic.below(write_cursor / kWriteBytes);
        r.read_length_dw = kReadDw;
      }
      if (!(r.kind == TlpKind::MemRd && sim.outstanding().full())) sim.submit(r);
    }
    sim.tick();
    if (observer) observer(sim);
  }
  const std::uint64_t drain_end = sim.now() + config.drain_limit_cycles;
  while (!sim.quiescent() && sim.now() < drain_end) {
    sim.tick();
    if (observer) observer(sim);
  }

  run.report = evaluate(config, sim);
  return run;
}

CampaignReport evaluate(const CampaignConfig& config, const Simulator& sim) {
  CampaignReport r;
  r.seed = config.seed;
  r.mode = config.mode;
  r.total_cycles = sim.now();
  r.corrupted_bytes_delivered = sim.corrupted_bytes_delivered();
  r.link_down_cycles_total = sim.link_down_cycles();
  r.aer_final = sim.aer();
  r.interrupts = sim.interrupts().size();
  r.transactions = sim.transactions().size();
  r.drained = sim.quiescent();

  std::map<std::uint32_t, std::vector<const ErrorEvent*>> by_fault;
  for (const ErrorEvent& e : sim.events()) {
    if (e.attributed_fault)
      by_fault[*e.attributed_fault].push_back(&e);
    else
      ++r.unattributed_events;
  }
  std::map<std::uint32_t, std::size_t> resolved;
  for (const RecoveryRecord& rec : sim.recoveries()) {
    r.recovery_latencies.push_back(rec.latency_cycles);
    if (rec.fault_id) ++resolved[*rec.fault_id];
  }
  if (config.mode == RecoveryMode::Baseline) {
    for (const DispositionRecord& d : sim.dispositions())
      if (d.event.attributed_fault && d.disposition.recovered) ++resolved[*d.event.attributed_fault];
  }

  for (const FaultOutcome& o : sim.fault_outcomes()) {
    KindCounts& k = r.per_kind[static_cast<std::size_t>(o.spec.kind)];
    ++k.injected;
    if (!o.applied) ++r.faults_not_applied;
    const auto it = by_fault.find(o.spec.id);
    const bool detected = it != by_fault.end();
    bool correct = detected;
    std::size_t needs_recovery = 0;
    if (detected) {
      for (const ErrorEvent* e : it->second) {
        if (e->kind != expected_error_for(o.spec.kind)) {
          correct = false;
          ++r.misclassified_events;
        }
        if (e->severity() != Severity::Correctable) ++needs_recovery;
      }
    }
    k.detected += detected;
    k.classified_correctly += correct;
    const auto res = resolved.find(o.spec.id);
    if (detected && (res == resolved.end() ? 0 : res->second) >= needs_recovery) ++k.recovered;
    if (!correct) r.failed_faults.push_back(o.spec.id);
  }

  const Bytes& golden = sim.golden_stream();
  const Bytes& image = sim.delivered_image();
  for (std::size_t i = 0; i < std::max(golden.size(), image.size()); ++i) {
    const int g = i < golden.size() ? golden[i] : -1;
    const int d = i < image.size() ? image[i] : -1;
    r.stream_mismatch_bytes += g != d;
  }
  return r;
}

bool CampaignReport::passed() const {
  for (const KindCounts& k : per_kind)
    if (k.detected != k.injected || k.classified_correctly != k.injected) return false;
  return corrupted_bytes_delivered == 0 && stream_mismatch_bytes == 0 && unattributed_events == 0 &&
         misclassified_events == 0 && faults_not_applied == 0 && drained;
}

nlohmann::ordered_json CampaignReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["mode"] = to_string(mode);
  j["total_cycles"] = total_cycles;
  auto& pk = j["per_kind"];
  pk = nlohmann::ordered_json::object();
  for (FaultKind f : all_fault_kinds()) {
    const KindCounts& k = per_kind[static_cast<std::size_t>(f)];
    pk[to_string(f)] = {{"injected", k.injected},
                        {"detected", k.detected},
                        {"classified_correctly", k.classified_correctly},
                        {"recovered", k.recovered}};
  }
  j["corrupted_bytes_delivered"] = corrupted_bytes_delivered;
  j["recovery_latencies"] = recovery_latencies;
  j["link_down_cycles_total"] = link_down_cycles_total;
  nlohmann::ordered_json aer;
  aer["correctable_status"] = aer_final.correctable_status;
  aer["uncorrectable_status"] = aer_final.uncorrectable_status;
  aer["first_error_kind"] = aer_final.first_error_kind ? to_string(*aer_final.first_error_kind) : "-";
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (ErrorKind e : all_error_kinds()) counts[to_string(e)] = aer_final.counts[index_of(e)];
  aer["counts"] = counts;
  j["aer_final"] = aer;
  j["faults_not_applied"] = faults_not_applied;
  j["unattributed_events"] = unattributed_events;
  j["misclassified_events"] = misclassified_events;
  j["stream_mismatch_bytes"] = stream_mismatch_bytes;
  j["interrupts"] = interrupts;
  j["transactions"] = transactions;
  j["drained"] = drained;
  j["failed_faults"] = failed_faults;
  j["passed"] = passed();
  return j;
}

CampaignReport run_campaign(const CampaignConfig& config) {
  CampaignRun run = execute_campaign(config);
  if (config.trace_path) {
    std::ofstream out(*config.trace_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open trace file " + *config.trace_path);
    emit_trace(run.sim->trace(), out);
  }
  if (config.report_path) {
    std::ofstream out(*config.report_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open report file " + *config.report_path);
    out << run.report.to_json().dump(2) << '\n';
    if (!out.flush()) throw std::runtime_error("report write failed");
  }
  return run.report;
}

}  // namespace pcie_sim
