// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcie_sim/fault_kind.hpp"

namespace pcie_sim {

class Simulator;

/// splitmix64, the campaign PRNG. Portable and fully specified.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  /// Uniform-ish value in [0, bound) by modulo reduction; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) { return next() % bound; }

 private:
  std::uint64_t state_;
};

struct FaultSpec {
  std::uint32_t id = 0;
  std::uint64_t cycle = 0;
  FaultKind kind = FaultKind::FlipTlpPayloadBit;
  std::uint64_t param = 0;  // kind-specific: bit index, selector or stall length source
  std::uint64_t seed = 0;   // per-fault lineage drawn from the campaign stream

  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

inline constexpr std::uint64_t kMinFaultSpacing = 32;

class HorizonTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exactly count_per_kind faults of each kind, sorted by cycle, at least
/// kMinFaultSpacing cycles apart, all strictly before horizon.
std::vector<FaultSpec> gen_campaign(std::uint64_t seed, std::uint32_t count_per_kind, std::uint64_t horizon);

/// What an applied fault changed, with the golden value for the comparator.
struct MutationRecord {
  std::uint32_t fault_id = 0;
  FaultKind kind = FaultKind::FlipTlpPayloadBit;
  std::uint64_t cycle = 0;
  std::string what;
  std::uint64_t golden_value = 0;
  std::uint64_t mutated_value = 0;
};

/// Applies the fault to the simulator's current state. nullopt means no
/// eligible target is in flight; the caller retries on a later cycle.
std::optional<MutationRecord> apply_fault(const FaultSpec& spec, Simulator& sim);

/// `fault=<id>,<cycle>,<kind>,<param>,<seed>`; one line per spec.
std::string format_fault_line(const FaultSpec& spec);
std::optional<FaultSpec> parse_fault_value(const std::string& value);

}  // namespace pcie_sim
