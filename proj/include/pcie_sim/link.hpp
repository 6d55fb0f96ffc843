// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pcie_sim/errors.hpp"
#include "pcie_sim/packet.hpp"

namespace pcie_sim {

// ---------------------------------------------------------------------------
// LTSSM-lite

enum class Ltssm : std::uint8_t { Detect, Polling, Config, L0, RecoveryRetrain, Disabled };
const char* to_string(Ltssm state);

enum class LtssmEvent : std::uint8_t { TrainOk, TrainFail, FatalSeen, RetrainDone };

struct LinkState {
  Ltssm ltssm = Ltssm::Detect;
  std::uint64_t cycles_in_state = 0;
  std::uint32_t retrain_count = 0;
  friend bool operator==(const LinkState&, const LinkState&) = default;
};

struct LtssmStep {
  LinkState next;
  bool training_error = false;  // TrainFail observed: surfaces as ErrorKind::TrainingError
};

/// Pure transition function. TrainFail inside a training state restarts from
/// Detect; in L0 it is reported but leaves the state alone (the fatal handler
/// decides whether to retrain).
LtssmStep ltssm_step(const LinkState& state, LtssmEvent event);

// ---------------------------------------------------------------------------
// Simulation-only bookkeeping carried beside wire artifacts. Never serialized.

struct ItemMeta {
  std::uint64_t txn_id = 0;
  std::optional<std::uint32_t> fault_id;
  bool symbol_error = false;  // physical-layer symbol corruption on this copy
  std::uint16_t credit_dw = 0;  // data credits charged by the transmitter
};

struct Frame {
  DlFrame frame;
  ItemMeta meta;
};

// ---------------------------------------------------------------------------
// Transmitter-side flow control view. Counters are cumulative; the DLLP wire
// fields carry them modulo 2^8 / 2^16.

struct FlowControl {
  std::uint64_t hdr_consumed = 0;
  std::uint64_t data_consumed_dw = 0;
  std::uint64_t hdr_limit = 0;
  std::uint64_t data_limit_dw = 0;
  bool infinite = false;

  static FlowControl advertised(std::uint32_t hdr, std::uint32_t data_dw);
  static FlowControl unlimited();

  bool can_send(std::uint32_t data_dw) const;
  void consume(std::uint32_t data_dw);
  /// Applies an FcUpdate, reconstructing the cumulative limit from the wrapped fields.
  void update(std::uint8_t hdr_field, std::uint16_t data_field);
  bool within_limits() const { return infinite || (hdr_consumed <= hdr_limit && data_consumed_dw <= data_limit_dw); }
};

// Receiver-side credit accounting (receive buffer).
struct RxCredits {
  std::uint32_t capacity_hdr = 8;
  std::uint32_t capacity_data_dw = 256;
  std::uint64_t hdr_received = 0;
  std::uint64_t data_received_dw = 0;
  std::uint64_t hdr_freed = 0;
  std::uint64_t data_freed_dw = 0;
  std::uint64_t hdr_advertised = 0;  // limit last sent to the transmitter
  std::uint64_t data_advertised_dw = 0;
  bool dirty = false;  // freed credits not yet advertised
  bool infinite = false;

  static RxCredits with_capacity(std::uint32_t hdr, std::uint32_t data_dw);

  std::uint64_t hdr_allocated() const { return hdr_freed + capacity_hdr; }
  std::uint64_t data_allocated_dw() const { return data_freed_dw + capacity_data_dw; }
  /// Registers an arriving TLP; returns false if it exceeds the advertised limits.
  bool receive(std::uint32_t data_dw);
  void free(std::uint32_t data_dw);
  /// Marks the current allocation as advertised and returns the FcUpdate for it.
  Dllp advertise();
};

// ---------------------------------------------------------------------------

class ReplayBuffer {
 public:
  static constexpr std::size_t kCapacity = 32;

  bool full() const { return entries_.size() >= kCapacity; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::deque<Frame>& entries() const { return entries_; }

  void push(Frame frame);
  /// Cumulative acknowledgement: drops every entry up to and including seq.
  /// Returns the number of entries removed.
  std::size_t ack(std::uint16_t seq);

  std::uint64_t replay_timer = 0;

 private:
  std::deque<Frame> entries_;
};

// ---------------------------------------------------------------------------

struct OutstandingRequest {
  std::uint64_t submit_cycle = 0;
  TlpKind kind = TlpKind::MemRd;
  std::uint64_t timeout_at = 0;
  std::uint64_t txn_id = 0;
  std::optional<std::uint32_t> fault_id;
};

class OutstandingRequests {
 public:
  bool contains(std::uint8_t tag) const { return table_.count(tag) != 0; }
  std::size_t size() const { return table_.size(); }
  bool full() const { return table_.size() >= 256; }
  void insert(std::uint8_t tag, OutstandingRequest req);
  std::optional<OutstandingRequest> retire(std::uint8_t tag);
  OutstandingRequest* find(std::uint8_t tag);
  /// Removes and returns every request whose timeout_at <= now, oldest tag first.
  std::vector<std::pair<std::uint8_t, OutstandingRequest>> expire(std::uint64_t now);
  const std::map<std::uint8_t, OutstandingRequest>& table() const { return table_; }

 private:
  std::map<std::uint8_t, OutstandingRequest> table_;
};

// ---------------------------------------------------------------------------
// Receiving data-link layer.

enum class DlOutcome : std::uint8_t { Accept, Nak, Duplicate };

struct DlResult {
  DlOutcome outcome = DlOutcome::Accept;
  std::uint16_t expected_seq = 0;
  std::optional<ErrorKind> error;
  bool send_nak = false;  // a new Nak must go out (false while one is already scheduled)
};

struct RxDataLink {
  std::uint16_t expected_seq = 0;
  bool nak_scheduled = false;

  /// LCRC check, then sequence check. While a Nak is outstanding, frames that
  /// are ahead of the expected sequence are discarded silently.
  DlResult receive(const DlFrame& frame);
};

class SubmitError : public std::runtime_error {
 public:
  enum class Code { NoFreeTag, LinkDown };
  SubmitError(Code code, const char* what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

}  // namespace pcie_sim
