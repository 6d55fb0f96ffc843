// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "pcie_sim/errors.hpp"
#include "pcie_sim/fault.hpp"
#include "pcie_sim/link.hpp"
#include "pcie_sim/packet.hpp"
#include "pcie_sim/recovery.hpp"
#include "pcie_sim/trace.hpp"

namespace pcie_sim {

struct SimConfig {
  RecoveryMode mode = RecoveryMode::Proposed;
  std::uint64_t completion_timeout_cycles = 1024;
  std::uint64_t replay_timeout_cycles = 64;
  std::uint64_t retrain_cost = 40;
  std::uint64_t snapshot_interval = 1;
  std::uint64_t fc_starvation_cycles = 512;
  std::uint64_t ack_repeat_cycles = 16;
  std::uint32_t dllp_latency = 3;
  std::uint32_t advertised_hdr = 8;
  std::uint32_t advertised_data_dw = 256;
  std::uint32_t max_fault_retries = 1000;
  bool completer_accepts_msg = false;
  std::uint64_t abort_base = 0xFFFF'0000'0000'0000ull;
  std::uint16_t requester_id = 0x0100;
};

/// A request as the requester's software issues it.
struct Request {
  TlpKind kind = TlpKind::MemWr;
  std::uint64_t address = 0;
  Bytes payload;
  std::uint16_t read_length_dw = 0;  // MemRd only
  bool ecrc = true;
};

struct Transaction {
  std::uint64_t id = 0;
  Request request;
  std::uint64_t submit_cycle = 0;
  std::uint8_t tag = 0;
  std::optional<std::uint64_t> reissue_of;
  std::optional<std::uint64_t> delivered_cycle;  // first commit (writes) or completion (reads)
};

enum class Dir : std::uint8_t { Down, Up };  // Down: requester -> completer

/// One direction of the link: transmitter TL/DL/PL, receiver PL/DL/TL and the
/// DLLP return path from receiver back to transmitter.
struct Direction {
  static constexpr std::size_t kStages = 6;

  std::deque<Frame> tl_queue;  // formed TLPs waiting for credits
  // slot[k] holds the item that completed stage k this cycle:
  // 0 TX TL, 1 TX DL, 2 TX PL, 3 RX PL, 4 RX DL, 5 RX TL.
  std::array<std::optional<Frame>, kStages> slot;

  std::uint16_t next_seq = 0;
  ReplayBuffer replay;
  std::deque<Frame> replay_queue;
  FlowControl tx_credits;
  std::uint64_t starved_cycles = 0;

  RxDataLink rx_dl;
  RxCredits rx_credits;
  struct AckState {
    std::uint16_t seq = 0;
    std::uint64_t sent_cycle = 0;
    bool repeated = true;
  } last_ack;

  struct DllpInFlight {
    Dllp dllp;
    std::uint32_t remaining = 0;
    std::optional<std::uint32_t> fault_id;
  };
  std::deque<DllpInFlight> dllps;

  bool idle() const;
};

struct HeldTlp {
  Frame item;
  Dir dir = Dir::Down;
  ErrorEvent event;
};

struct DispositionRecord {
  ErrorEvent event;
  Disposition disposition;
  std::uint64_t cycle = 0;
};

struct FaultOutcome {
  FaultSpec spec;
  bool applied = false;
  bool expired = false;
  std::uint32_t retries = 0;
  std::uint64_t applied_cycle = 0;
};

/// The cycle-driven link model with recovery controller and fault hooks.
/// Single-threaded and deterministic.
class Simulator {
 public:
  static constexpr std::uint64_t kNoTxn = ~std::uint64_t{0};

  explicit Simulator(SimConfig config = {});

  const SimConfig& config() const { return config_; }
  std::uint64_t now() const { return now_; }
  const LinkState& link() const { return link_; }

  /// Queues a request at the requester's transaction layer and returns its tag.
  /// Throws SubmitError (LinkDown, NoFreeTag) or std::invalid_argument.
  std::uint8_t submit(const Request& request);

  /// Advances one cycle and returns the errors detected in it.
  std::vector<ErrorEvent> tick();

  void schedule_faults(const std::vector<FaultSpec>& faults);
  bool quiescent() const;

  // Observables.
  const std::vector<TraceRecord>& trace() const { return trace_; }
  const std::vector<ErrorEvent>& events() const { return events_; }
  const AerRegisters& aer() const { return aer_; }
  const std::vector<InterruptEvent>& interrupts() const { return interrupts_; }
  const std::vector<RecoveryRecord>& recoveries() const { return recoveries_; }
  const std::vector<DispositionRecord>& dispositions() const { return dispositions_; }
  const std::vector<MutationRecord>& mutations() const { return mutations_; }
  const std::vector<FaultOutcome>& fault_outcomes() const { return fault_outcomes_; }
  const std::vector<Transaction>& transactions() const { return txns_; }
  const std::vector<std::uint64_t>& write_commit_order() const { return write_commit_order_; }
  const Bytes& golden_stream() const { return golden_; }
  const Bytes& delivered_image() const { return completer_memory_; }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  std::uint64_t corrupted_bytes_delivered() const { return corrupted_bytes_; }
  std::uint64_t stale_recoveries() const { return stale_recoveries_; }
  std::uint64_t link_down_cycles() const { return link_down_cycles_; }
  std::uint64_t max_credit_overdraw() const { return max_credit_overdraw_; }
  const OutstandingRequests& outstanding() const { return outstanding_; }

  Direction& direction(Dir d) { return d == Dir::Down ? down_ : up_; }
  const Direction& direction(Dir d) const { return d == Dir::Down ? down_ : up_; }

  // Fault hooks used by apply_fault.
  bool txn_tainted(std::uint64_t txn_id) const { return tainted_txns_.count(txn_id) != 0; }
  void taint(Frame& item, std::uint32_t fault_id);
  void arm_drop_ack(std::uint32_t fault_id);
  void arm_fc_suppression(std::uint32_t fault_id);
  bool credit_violation_armed() const { return !credit_violation_faults_.empty(); }
  /// Queues a completion that belongs to no transaction on the upstream path.
  void inject_completion(const Tlp& completion, std::uint32_t fault_id);
  void arm_credit_violation(std::uint32_t fault_id);
  void arm_completion_stall(std::uint8_t tag, std::uint32_t fault_id, std::uint64_t stall_cycles);
  void break_training(std::uint32_t fault_id);
  /// First tag at or after `from` that is not outstanding.
  std::uint8_t unused_tag_from(std::uint8_t from) const;
  std::uint8_t next_tag_hint() const { return next_tag_; }
  /// True when no DL-level fault consequence is pending on the downstream path.
  bool downstream_dl_clean() const;

  /// Test hook: corrupt payload bytes of the TLP that just passed the
  /// downstream RX DL check, bypassing every integrity code.
  bool corrupt_post_dl_payload(std::size_t byte_index, std::uint8_t xor_mask);

 private:
  struct PendingRecovery {
    InterruptEvent interrupt;
    std::optional<HeldTlp> held;
    std::optional<std::uint64_t> txn;
  };
  struct Withheld {
    Frame item;
    std::uint64_t release_cycle;
  };

  std::uint8_t submit_internal(const Request& request, std::optional<std::uint64_t> reissue_of);
  void record_event(ErrorEvent event, std::optional<HeldTlp> held = std::nullopt,
                    std::optional<std::uint64_t> txn = std::nullopt);
  void advance_ltssm();
  void on_retrain_done();
  void run_recovery_controller();
  void resolve(PendingRecovery& p);
  void release_credits(const HeldTlp& held);
  void end_fc_suppression(std::optional<std::uint32_t> fault_id);
  void note_write_delivered(std::uint64_t txn_id);
  std::optional<std::uint8_t> reissue(std::uint64_t txn_id);
  void drain_reissues();
  void move_direction(Dir d);
  void deliver_dllps(Dir d);
  void send_dllp(Dir d, Dllp dllp, std::optional<std::uint32_t> fault_id = std::nullopt);
  void send_ack(Dir d, std::uint16_t seq);
  void rx_tl(Dir d, Frame item);
  void completer_rx_tl(Frame item);
  void requester_rx_tl(Frame item);
  void commit(Dir d, Frame item);
  void commit_write(const Tlp& tlp, std::uint64_t txn_id);
  void serve_read(const Tlp& tlp, const ItemMeta& meta);
  void check_timers();
  void apply_due_faults();
  void take_snapshot();
  void resync_credits(const CreditSummary& credits);
  bool down_head_clean() const;
  std::uint64_t root_txn(std::uint64_t txn_id) const;

  SimConfig config_;
  std::uint64_t now_ = 0;
  LinkState link_;
  Direction down_;
  Direction up_;

  std::vector<Transaction> txns_;
  std::uint8_t next_tag_ = 0;
  OutstandingRequests outstanding_;
  Bytes golden_;
  Bytes completer_memory_;
  std::map<std::uint64_t, Bytes> expected_completion_;  // txn -> payload as sent by the completer
  std::vector<std::uint64_t> write_commit_order_;
  std::uint64_t corrupted_bytes_ = 0;
  std::uint64_t delivered_bytes_ = 0;
  bool delivered_this_tick_ = false;

  std::vector<ErrorEvent> events_;
  std::vector<ErrorEvent> cycle_events_;
  AerRegisters aer_;
  std::vector<InterruptEvent> interrupts_;
  std::deque<PendingRecovery> pending_accept_;
  std::deque<PendingRecovery> pending_recover_;
  std::vector<RecoveryRecord> recoveries_;
  std::vector<DispositionRecord> dispositions_;
  std::deque<std::uint64_t> reissue_queue_;
  std::vector<HeldTlp> baseline_drops_;  // fatal TLPs to re-issue once the link retrains
  std::uint64_t link_down_cycles_ = 0;
  std::uint64_t stale_recoveries_ = 0;
  bool pr_this_cycle_ = false;

  std::vector<Snapshot> snapshots_;
  Snapshot latest_snapshot_;

  std::deque<std::uint32_t> drop_ack_faults_;
  std::deque<std::uint32_t> fc_suppress_faults_;
  std::deque<std::uint32_t> credit_violation_faults_;
  std::deque<std::uint32_t> violations_in_flight_;  // bypassed, not yet at the receiver
  std::map<std::uint8_t, std::pair<std::uint32_t, std::uint64_t>> stall_tags_;  // tag -> (fault, stall)
  std::vector<Withheld> withheld_;
  std::set<std::uint64_t> tainted_txns_;
  std::uint64_t max_credit_overdraw_ = 0;

  std::map<std::pair<std::uint64_t, std::uint32_t>, FaultSpec> pending_faults_;  // (cycle, id)
  std::map<std::uint32_t, std::size_t> outcome_index_;
  std::vector<FaultOutcome> fault_outcomes_;
  std::vector<MutationRecord> mutations_;

  std::vector<TraceRecord> trace_;
  TraceRecord current_;
};

}  // namespace pcie_sim
