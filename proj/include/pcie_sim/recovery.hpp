// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pcie_sim/errors.hpp"
#include "pcie_sim/link.hpp"
#include "pcie_sim/packet.hpp"

namespace pcie_sim {

enum class RecoveryMode : std::uint8_t { Proposed, Baseline };
const char* to_string(RecoveryMode mode);

struct CreditSummary {
  std::uint64_t hdr_allocated = 0;
  std::uint64_t data_allocated_dw = 0;
  std::uint64_t hdr_received = 0;
  std::uint64_t data_received_dw = 0;
  friend bool operator==(const CreditSummary&, const CreditSummary&) = default;
};

/// Saved link/delivery state. delivered_image holds the bytes of the region
/// [golden_cursor, golden_cursor + size) of the delivered stream; it is empty
/// for periodic state-only snapshots.
struct Snapshot {
  std::uint64_t cycle = 0;
  Bytes delivered_image;
  std::uint16_t next_expected_seq = 0;
  CreditSummary credit_state;
  std::uint64_t golden_cursor = 0;
};

struct Mismatch {
  std::uint64_t offset = 0;  // absolute offset into the golden stream
  std::uint8_t golden_byte = 0;
  std::uint8_t observed_byte = 0;
  friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

/// First position where the snapshot's delivered bytes diverge from the golden
/// stream, or nullopt. Bytes past the end of the golden stream count as divergent.
std::optional<Mismatch> compare_and_flag(ByteView golden_stream, const Snapshot& snapshot);

struct InterruptEvent {
  ErrorEvent event;
  std::uint64_t raised_cycle = 0;
  std::uint64_t accepted_cycle = 0;  // raised_cycle + 1
};

/// Half-open byte range of the delivered stream.
struct ByteRange {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct RecoveryRecord {
  std::optional<std::uint32_t> fault_id;
  ErrorKind kind = ErrorKind::CorruptedRxTlp;
  std::uint64_t raised_cycle = 0;
  std::uint64_t accepted_cycle = 0;
  std::uint64_t corrected_cycle = 0;
  std::uint32_t latency_cycles = 0;  // corrected - accepted
  std::uint64_t bytes_corrected = 0;
  std::optional<std::uint8_t> reissued_tag;
};

class SnapshotStale : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rewrites delivered_image over `range` from the golden stream. Correction is
/// visible one cycle after the interrupt is accepted. Throws SnapshotStale when
/// the snapshot predates the corruption onset (the interrupt's event cycle).
RecoveryRecord recover(const Snapshot& snapshot, const InterruptEvent& interrupt, ByteView golden_stream,
                       ByteRange range, Bytes& delivered_image);

struct Disposition {
  std::uint64_t link_down_cycles = 0;
  bool recovered = false;
  LinkState link;  // state after handling
};

/// Fatal-error disposition. Proposed keeps the link in L0; Baseline enters
/// RecoveryRetrain for retrain_cost cycles. Throws std::invalid_argument for
/// events that are not fatal.
Disposition handle_fatal(const ErrorEvent& event, RecoveryMode mode, const LinkState& link,
                         std::uint64_t retrain_cost);

}  // namespace pcie_sim
