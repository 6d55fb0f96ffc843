// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <functional>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcie_sim/simulator.hpp"

namespace pcie_sim {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CampaignConfig {
  std::uint64_t seed = 1;
  RecoveryMode mode = RecoveryMode::Proposed;
  std::uint64_t horizon_cycles = 200'000;
  std::uint32_t count_per_kind = 0;
  std::uint64_t snapshot_interval = 1;
  std::uint64_t retrain_cost = 40;
  std::uint64_t completion_timeout_cycles = 1024;
  std::uint64_t replay_timeout_cycles = 64;
  std::optional<std::string> trace_path;
  std::optional<std::string> report_path;

  /// `kinds=` keeps only these kinds of the generated campaign (empty: all).
  std::vector<FaultKind> kinds;
  /// `fault=` lines replace the generated campaign entirely.
  std::vector<FaultSpec> faults;

  /// Background traffic keeps running this long past the horizon, then the
  /// link drains for at most drain_limit cycles.
  std::uint64_t traffic_tail_cycles = 2048;
  std::uint64_t drain_limit_cycles = 20'000;
};

/// Parses `key=value` lines; `#` and `;` start comments. Throws ConfigError.
CampaignConfig parse_config(std::istream& in);
CampaignConfig load_config(const std::string& path);
SimConfig sim_config_for(const CampaignConfig& config);

/// The campaign's fault list after `fault=` / `kinds=` handling.
std::vector<FaultSpec> campaign_faults(const CampaignConfig& config);

struct KindCounts {
  std::uint64_t injected = 0;
  std::uint64_t detected = 0;
  std::uint64_t classified_correctly = 0;
  std::uint64_t recovered = 0;
};

struct CampaignReport {
  std::uint64_t seed = 0;
  RecoveryMode mode = RecoveryMode::Proposed;
  std::uint64_t total_cycles = 0;
  std::array<KindCounts, kFaultKindCount> per_kind{};
  std::uint64_t corrupted_bytes_delivered = 0;
  std::vector<std::uint32_t> recovery_latencies;
  std::uint64_t link_down_cycles_total = 0;
  AerRegisters aer_final;

  std::uint64_t faults_not_applied = 0;
  std::uint64_t unattributed_events = 0;
  std::uint64_t misclassified_events = 0;
  std::uint64_t stream_mismatch_bytes = 0;
  std::uint64_t interrupts = 0;
  std::uint64_t transactions = 0;
  bool drained = false;
  std::vector<std::uint32_t> failed_faults;  // ids not detected or misclassified

  /// Every invariant of a passing campaign holds.
  bool passed() const;
  nlohmann::ordered_json to_json() const;
};

struct CampaignRun {
  CampaignReport report;
  std::unique_ptr<Simulator> sim;
};

/// Builds the simulator, drives traffic and faults, and evaluates the result.
/// Does not touch the file system.
/// `observer` runs after every tick.
CampaignRun execute_campaign(const CampaignConfig& config,
                             const std::function<void(const Simulator&)>& observer = {});

/// execute_campaign plus trace/report files when the paths are configured.
CampaignReport run_campaign(const CampaignConfig& config);

CampaignReport evaluate(const CampaignConfig& config, const Simulator& sim);

}  // namespace pcie_sim
