// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/simulator.hpp"

#include <algorithm>
#include <string>

namespace pcie_sim {

namespace {

constexpr std::uint64_t kNever = ~std::uint64_t{0};

std::uint16_t payload_dw(const Request& r) { return static_cast<std::uint16_t>(r.payload.size() / 4); }

template <class T>
std::optional<T> take(std::optional<T>& slot) {
  std::optional<T> out = std::move(slot);
  slot.reset();
  return out;
}

}  // namespace

bool Direction::idle() const {
  if (!tl_queue.empty() || !replay.empty() || !replay_queue.empty() || !dllps.empty()) return false;
  return std::none_of(slot.begin(), slot.end(), [](const auto& s) { return s.has_value(); });
}

Simulator::Simulator(SimConfig config) : config_(config) {
  down_.tx_credits = FlowControl::advertised(config_.advertised_hdr, config_.advertised_data_dw);
  down_.rx_credits = RxCredits::with_capacity(config_.advertised_hdr, config_.advertised_data_dw);
  // Completions are never flow-control limited at the requester.
  up_.tx_credits = FlowControl::unlimited();
  up_.rx_credits.infinite = true;
  if (config_.snapshot_interval == 0) config_.snapshot_interval = 1;
}

// ---------------------------------------------------------------------------
// Transaction layer, requester side

std::uint8_t Simulator::submit(const Request& request) {
  if (link_.ltssm != Ltssm::L0) throw SubmitError(SubmitError::Code::LinkDown, "link is not in L0");
  if (request.address % 4 != 0) throw std::invalid_argument("address must be DW aligned");
  switch (request.kind) {
    case TlpKind::MemWr:
      if (request.payload.size() % 4 != 0 || request.payload.size() > 4 * kMaxLengthDw)
        throw std::invalid_argument("write payload must be 0..1024 bytes in whole DWs");
      break;
    case TlpKind::MemRd:
      if (request.read_length_dw > kMaxLengthDw) throw std::invalid_argument("read length exceeds 256 DW");
      if (outstanding_.full()) throw SubmitError(SubmitError::Code::NoFreeTag, "no free tag");
      break;
    case TlpKind::Msg:
      break;
    default:
      throw std::invalid_argument("requester may only submit MemWr, MemRd or Msg");
  }
  if (request.kind == TlpKind::MemWr) {
    const std::uint64_t end = request.address + request.payload.size();
    if (golden_.size() < end) golden_.resize(end);
    std::copy(request.payload.begin(), request.payload.end(),
              golden_.begin() + static_cast<std::ptrdiff_t>(request.address));
  }
  return submit_internal(request, std::nullopt);
}

std::uint8_t Simulator::submit_internal(const Request& request, std::optional<std::uint64_t> reissue_of) {
  std::uint8_t tag = next_tag_;
  if (request.kind == TlpKind::MemRd) {
    for (int i = 0; i < 256 && outstanding_.contains(tag); ++i) tag = static_cast<std::uint8_t>(tag + 1);
  }
  next_tag_ = static_cast<std::uint8_t>(tag + 1);

  Tlp tlp;
  tlp.kind = request.kind;
  tlp.requester_id = config_.requester_id;
  tlp.tag = tag;
  tlp.address = request.address;
  if (request.kind == TlpKind::MemWr) {
    tlp.length_dw = payload_dw(request);
    tlp.payload = request.payload;
  } else if (request.kind == TlpKind::MemRd) {
    tlp.length_dw = request.read_length_dw;
  }
  if (request.ecrc) tlp = with_ecrc(std::move(tlp));

  Transaction txn;
  txn.id = txns_.size();
  txn.request = request;
  txn.submit_cycle = now_;
  txn.tag = tag;
  txn.reissue_of = reissue_of;
  txns_.push_back(txn);

  if (request.kind == TlpKind::MemRd)
    // The completion timer starts once the request leaves the transaction layer.
    outstanding_.insert(tag, {now_, TlpKind::MemRd, kNever, txn.id, std::nullopt});

  Frame item;
  item.frame.tlp_bytes = serialize_tlp(tlp);
  item.meta.txn_id = txn.id;
  item.meta.credit_dw = tlp.length_dw * (carries_payload(tlp.kind) ? 1 : 0);
  down_.tl_queue.push_back(std::move(item));
  return tag;
}

std::uint64_t Simulator::root_txn(std::uint64_t txn_id) const {
  while (txns_[txn_id].reissue_of) txn_id = *txns_[txn_id].reissue_of;
  return txn_id;
}

// ---------------------------------------------------------------------------

std::vector<ErrorEvent> Simulator::tick() {
  cycle_events_.clear();
  pr_this_cycle_ = false;
  current_ = TraceRecord{};
  current_.cycle = now_;
  delivered_this_tick_ = false;

  advance_ltssm();
  run_recovery_controller();
  if (link_.ltssm == Ltssm::L0) {
    drain_reissues();
    deliver_dllps(Dir::Down);
    deliver_dllps(Dir::Up);
    move_direction(Dir::Up);
    move_direction(Dir::Down);
  }
  check_timers();
  apply_due_faults();
  take_snapshot();

  if (link_.ltssm == Ltssm::RecoveryRetrain) ++link_down_cycles_;
  current_.ltssm = link_.ltssm;
  current_.pr_recovery = pr_this_cycle_;
  trace_.push_back(std::move(current_));
  ++now_;
  return cycle_events_;
}

void Simulator::record_event(ErrorEvent event, std::optional<HeldTlp> held, std::optional<std::uint64_t> txn) {
  event.cycle = now_;
  events_.push_back(event);
  cycle_events_.push_back(event);
  aer_ = aer_record(aer_, event);
  current_.err_kinds.push_back(event.kind);
  if (event.severity() != Severity::Correctable) {
    PendingRecovery p;
    p.interrupt = InterruptEvent{event, now_, now_ + 1};
    if (held) held->event = event;
    p.held = std::move(held);
    p.txn = txn;
    pending_accept_.push_back(std::move(p));
  }
}

// ---------------------------------------------------------------------------
// Physical layer state

void Simulator::advance_ltssm() {
  switch (link_.ltssm) {
    case Ltssm::Detect:
    case Ltssm::Polling:
    case Ltssm::Config:
      link_ = ltssm_step(link_, LtssmEvent::TrainOk).next;
      break;
    case Ltssm::RecoveryRetrain:
      ++link_.cycles_in_state;
      if (link_.cycles_in_state >= config_.retrain_cost) {
        link_ = ltssm_step(link_, LtssmEvent::RetrainDone).next;
        on_retrain_done();
      }
      break;
    default:
      ++link_.cycles_in_state;
      break;
  }
}

void Simulator::on_retrain_done() {
  for (Direction* d : {&down_, &up_}) {
    d->replay_queue.assign(d->replay.entries().begin(), d->replay.entries().end());
    d->replay.replay_timer = 0;
  }
  // Flow control is re-initialised with the link.
  resync_credits(CreditSummary{down_.rx_credits.hdr_allocated(), down_.rx_credits.data_allocated_dw(),
                               down_.rx_credits.hdr_received, down_.rx_credits.data_received_dw});
  for (const HeldTlp& h : baseline_drops_) reissue(h.item.meta.txn_id);
  baseline_drops_.clear();
}

void Simulator::break_training(std::uint32_t fault_id) {
  const LtssmStep step = ltssm_step(link_, LtssmEvent::TrainFail);
  link_ = step.next;
  if (step.training_error) {
    ErrorEvent ev;
    ev.kind = ErrorKind::TrainingError;
    ev.attributed_fault = fault_id;
    ev.detail = "training sequence failed";
    record_event(std::move(ev));
  }
}

// ---------------------------------------------------------------------------
// Recovery controller: interrupt acceptance one cycle after the flag, the
// correction one cycle after acceptance.

void Simulator::run_recovery_controller() {
  while (!pending_accept_.empty() && pending_accept_.front().interrupt.raised_cycle < now_) {
    PendingRecovery p = std::move(pending_accept_.front());
    pending_accept_.pop_front();
    p.interrupt.accepted_cycle = now_;
    interrupts_.push_back(p.interrupt);
    const ErrorEvent& ev = p.interrupt.event;

    if (ev.severity() == Severity::FatalUncorrectable) {
      Disposition disp = handle_fatal(ev, config_.mode, link_, config_.retrain_cost);
      dispositions_.push_back({ev, disp, now_});
      if (config_.mode == RecoveryMode::Baseline) {
        if (link_.ltssm == Ltssm::L0) link_ = disp.link;
        if (ev.kind == ErrorKind::FlowControlProtocolError) end_fc_suppression(ev.attributed_fault);
        if (p.held) {
          release_credits(*p.held);
          baseline_drops_.push_back(std::move(*p.held));
        }
        continue;
      }
    }
    pending_recover_.push_back(std::move(p));
  }

  while (!pending_recover_.empty() && pending_recover_.front().interrupt.accepted_cycle < now_) {
    PendingRecovery p = std::move(pending_recover_.front());
    pending_recover_.pop_front();
    resolve(p);
  }
}

void Simulator::release_credits(const HeldTlp& held) {
  if (held.dir == Dir::Down) down_.rx_credits.free(held.item.meta.credit_dw);
}

void Simulator::end_fc_suppression(std::optional<std::uint32_t> fault_id) {
  if (fault_id) {
    auto it = std::find(fc_suppress_faults_.begin(), fc_suppress_faults_.end(), *fault_id);
    if (it != fc_suppress_faults_.end()) fc_suppress_faults_.erase(it);
  }
}

void Simulator::resolve(PendingRecovery& p) {
  const ErrorEvent& ev = p.interrupt.event;
  const bool fatal = ev.severity() == Severity::FatalUncorrectable;

  std::optional<Tlp> golden_tlp;
  ByteRange range;
  std::optional<std::uint64_t> txn = p.txn;
  if (p.held) {
    txn = p.held->item.meta.txn_id;
    if (p.held->dir == Dir::Down) {
      const Request& req = txns_[*txn].request;
      if (req.kind == TlpKind::MemWr) range = {req.address, req.payload.size()};
    }
  }

  RecoveryRecord rec;
  try {
    rec = recover(latest_snapshot_, p.interrupt, golden_, range, completer_memory_);
  } catch (const SnapshotStale&) {
    ++stale_recoveries_;
    if (p.held) release_credits(*p.held);
    if (txn && *txn != kNoTxn) reissue(*txn);
    if (ev.kind == ErrorKind::FlowControlProtocolError) end_fc_suppression(ev.attributed_fault);
    return;
  }
  pr_this_cycle_ = true;

  if (p.held && p.held->dir == Dir::Down) {
    const Transaction& t = txns_[*txn];
    if (fatal) {
      // Deliver the golden form of the rejected TLP in place.
      if (t.request.kind == TlpKind::MemWr) {
        note_write_delivered(t.id);
      } else if (t.request.kind == TlpKind::MemRd) {
        Tlp rd;
        rd.kind = TlpKind::MemRd;
        rd.requester_id = config_.requester_id;
        rd.tag = t.tag;
        rd.address = t.request.address;
        rd.length_dw = t.request.read_length_dw;
        rd.ecrc_present = t.request.ecrc;
        ItemMeta meta = p.held->item.meta;
        meta.fault_id.reset();
        serve_read(rd, meta);
      }
      release_credits(*p.held);
    } else {
      release_credits(*p.held);
      rec.reissued_tag = reissue(*txn);
    }
  } else if (!fatal) {
    if (txn && *txn != kNoTxn) rec.reissued_tag = reissue(*txn);
  } else {
    switch (ev.kind) {
      case ErrorKind::DllProtocolError:
        down_.rx_dl.expected_seq = latest_snapshot_.next_expected_seq;
        break;
      case ErrorKind::FlowControlProtocolError:
        resync_credits(latest_snapshot_.credit_state);
        down_.starved_cycles = 0;
        end_fc_suppression(ev.attributed_fault);
        break;
      default:
        break;
    }
  }
  recoveries_.push_back(rec);
}

std::optional<std::uint8_t> Simulator::reissue(std::uint64_t txn_id) {
  const Request req = txns_[txn_id].request;
  if (req.kind == TlpKind::Msg) return std::nullopt;  // cannot succeed on a retry
  std::vector<std::uint8_t> stale;
  for (const auto& [tag, entry] : outstanding_.table())
    if (entry.txn_id == txn_id) stale.push_back(tag);
  for (auto tag : stale) outstanding_.retire(tag);

  if (link_.ltssm != Ltssm::L0 || (req.kind == TlpKind::MemRd && outstanding_.full())) {
    reissue_queue_.push_back(txn_id);
    return std::nullopt;
  }
  return submit_internal(req, root_txn(txn_id));
}

void Simulator::drain_reissues() {
  while (!reissue_queue_.empty()) {
    const std::uint64_t id = reissue_queue_.front();
    if (txns_[id].request.kind == TlpKind::MemRd && outstanding_.full()) break;
    reissue_queue_.pop_front();
    submit_internal(txns_[id].request, root_txn(id));
  }
}

void Simulator::resync_credits(const CreditSummary& c) {
  RxCredits& rx = down_.rx_credits;
  // A TLP already sent past the old limit still counts as an overrun.
  if (violations_in_flight_.empty()) {
    rx.hdr_advertised = c.hdr_allocated;
    rx.data_advertised_dw = c.data_allocated_dw;
  }
  down_.tx_credits.hdr_limit = rx.hdr_advertised;
  down_.tx_credits.data_limit_dw = rx.data_advertised_dw;
  rx.dirty = rx.hdr_allocated() != rx.hdr_advertised || rx.data_allocated_dw() != rx.data_advertised_dw;
}

// ---------------------------------------------------------------------------
// Data-link layer

void Simulator::send_dllp(Dir d, Dllp dllp, std::optional<std::uint32_t> fault_id) {
  direction(d).dllps.push_back({dllp, config_.dllp_latency, fault_id});
}

void Simulator::send_ack(Dir d, std::uint16_t seq) {
  Direction& D = direction(d);
  D.last_ack = {seq, now_, false};
  if (d == Dir::Down && !drop_ack_faults_.empty()) return;
  send_dllp(d, make_ack(seq));
}

void Simulator::deliver_dllps(Dir d) {
  Direction& D = direction(d);
  for (auto& x : D.dllps)
    if (x.remaining > 0) --x.remaining;
  while (!D.dllps.empty() && D.dllps.front().remaining == 0) {
    Direction::DllpInFlight x = D.dllps.front();
    D.dllps.pop_front();
    if (!dllp_crc_ok(x.dllp)) {
      ErrorEvent ev;
      ev.kind = ErrorKind::BadDllp;
      ev.seq_or_tag = x.dllp.seq_num;
      ev.attributed_fault = x.fault_id;
      ev.detail = std::string("DLLP CRC mismatch on ") + to_string(x.dllp.kind);
      record_event(std::move(ev));
      continue;
    }
    switch (x.dllp.kind) {
      case DllpKind::Ack:
        D.replay.ack(x.dllp.seq_num);
        std::erase_if(D.replay_queue, [&](const Frame& f) { return seq_le(f.frame.seq_num, x.dllp.seq_num); });
        D.replay.replay_timer = 0;
        break;
      case DllpKind::Nak:
        D.replay.ack(x.dllp.seq_num);
        D.replay_queue.assign(D.replay.entries().begin(), D.replay.entries().end());
        D.replay.replay_timer = 0;
        break;
      case DllpKind::FcUpdate:
        D.tx_credits.update(x.dllp.hdr_credits, x.dllp.data_credits_dw);
        // The watchdog counts blocked cycles since the last credit update.
        D.starved_cycles = 0;
        break;
    }
  }
}

void Simulator::move_direction(Dir d) {
  Direction& D = direction(d);
  auto& s = D.slot;

  if (auto item = take(s[5])) commit(d, std::move(*item));
  if (auto item = take(s[4])) rx_tl(d, std::move(*item));

  if (auto item = take(s[3])) {
    const DlResult r = D.rx_dl.receive(item->frame);
    if (r.error) {
      ErrorEvent ev;
      ev.kind = *r.error;
      ev.seq_or_tag = item->frame.seq_num;
      ev.attributed_fault = item->meta.fault_id;
      ev.detail = *r.error == ErrorKind::BadTlp ? "LCRC mismatch" : "sequence number ahead of expected";
      record_event(std::move(ev));
    }
    if (r.send_nak) send_dllp(d, make_nak(seq_next(r.expected_seq, kSeqModulus - 1)));
    if (r.outcome == DlOutcome::Accept) {
      send_ack(d, item->frame.seq_num);
      s[4] = std::move(item);
    } else if (r.outcome == DlOutcome::Duplicate) {
      send_ack(d, seq_next(r.expected_seq, kSeqModulus - 1));
    }
  }

  if (auto item = take(s[2])) {
    if (item->meta.symbol_error) {
      ErrorEvent ev;
      ev.kind = ErrorKind::RxError;
      ev.seq_or_tag = item->frame.seq_num;
      ev.attributed_fault = item->meta.fault_id;
      ev.detail = "symbol error, frame discarded at receiver";
      record_event(std::move(ev));
      if (!D.rx_dl.nak_scheduled) {
        D.rx_dl.nak_scheduled = true;
        send_dllp(d, make_nak(seq_next(D.rx_dl.expected_seq, kSeqModulus - 1)));
      }
    } else {
      if (d == Dir::Down) current_.rx_data = serialize_frame(item->frame);
      s[3] = std::move(item);
    }
  }

  if (auto item = take(s[1])) {
    if (d == Dir::Down) current_.tx_data = serialize_frame(item->frame);
    s[2] = std::move(item);
  }

  if (!D.replay_queue.empty()) {
    Frame f = std::move(D.replay_queue.front());
    D.replay_queue.pop_front();
    s[1] = std::move(f);
  } else if (s[0] && !D.replay.full()) {
    Frame f = std::move(*take(s[0]));
    f.frame = frame_bytes(D.next_seq, std::move(f.frame.tlp_bytes));
    D.next_seq = seq_next(D.next_seq);
    if (D.replay.empty()) D.replay.replay_timer = 0;
    D.replay.push(f);
    s[1] = std::move(f);
  }

  if (!s[0] && !D.tl_queue.empty()) {
    const std::uint32_t need = D.tl_queue.front().meta.credit_dw;
    const bool update_in_flight = std::any_of(D.dllps.begin(), D.dllps.end(), [](const auto& x) {
      return x.dllp.kind == DllpKind::FcUpdate;
    });
    if (D.tx_credits.can_send(need)) {
      D.tx_credits.consume(need);
      s[0] = std::move(D.tl_queue.front());
      D.tl_queue.pop_front();
    } else if (d == Dir::Down && !credit_violation_faults_.empty() && !update_in_flight && down_head_clean()) {
      D.tx_credits.consume(need);
      Frame f = std::move(D.tl_queue.front());
      D.tl_queue.pop_front();
      taint(f, credit_violation_faults_.front());
      violations_in_flight_.push_back(credit_violation_faults_.front());
      credit_violation_faults_.pop_front();
      s[0] = std::move(f);
    } else if (++D.starved_cycles >= config_.fc_starvation_cycles) {
      // One report per withheld-update source; an unexplained stall is reported once.
      std::vector<std::optional<std::uint32_t>> sources(fc_suppress_faults_.begin(), fc_suppress_faults_.end());
      if (sources.empty()) sources.emplace_back();
      for (const auto& src : sources) {
        ErrorEvent ev;
        ev.kind = ErrorKind::FlowControlProtocolError;
        ev.attributed_fault = src;
        ev.detail = "no credit update before the starvation deadline";
        record_event(std::move(ev));
      }
      D.starved_cycles = 0;
    }
  }
  if (d == Dir::Down && s[0] && static_cast<TlpKind>(s[0]->frame.tlp_bytes[0]) == TlpKind::MemRd) {
    if (auto* req = outstanding_.find(s[0]->frame.tlp_bytes[3]); req && req->timeout_at == kNever)
      req->timeout_at = now_ + config_.completion_timeout_cycles;
  }
  if (!D.tx_credits.infinite && D.tx_credits.hdr_consumed > D.tx_credits.hdr_limit)
    max_credit_overdraw_ = std::max(max_credit_overdraw_, D.tx_credits.hdr_consumed - D.tx_credits.hdr_limit);

  // Receiver housekeeping: Ack repeat and credit return.
  if (!D.last_ack.repeated && now_ - D.last_ack.sent_cycle >= config_.ack_repeat_cycles) {
    D.last_ack.repeated = true;
    if (!(d == Dir::Down && !drop_ack_faults_.empty())) send_dllp(d, make_ack(D.last_ack.seq));
  }
  // An armed bypass holds back updates only while it has a clean TLP to push.
  const bool violation_waiting =
      !credit_violation_faults_.empty() && (D.tl_queue.empty() || down_head_clean());
  if (d == Dir::Down && D.rx_credits.dirty && fc_suppress_faults_.empty() && !violation_waiting &&
      violations_in_flight_.empty())
    send_dllp(d, D.rx_credits.advertise());
}

// ---------------------------------------------------------------------------
// Transaction layer, receive side

void Simulator::rx_tl(Dir d, Frame item) {
  if (d == Dir::Down)
    completer_rx_tl(std::move(item));
  else
    requester_rx_tl(std::move(item));
}

void Simulator::completer_rx_tl(Frame item) {
  const bool fits = down_.rx_credits.receive(item.meta.credit_dw);
  if (item.meta.fault_id) std::erase(violations_in_flight_, *item.meta.fault_id);
  auto hold = [&](ErrorKind kind, std::uint32_t tag, std::string detail) {
    ErrorEvent ev;
    ev.kind = kind;
    ev.seq_or_tag = tag;
    ev.attributed_fault = item.meta.fault_id;
    ev.detail = std::move(detail);
    const std::uint64_t txn = item.meta.txn_id;
    record_event(std::move(ev), HeldTlp{std::move(item), Dir::Down, {}}, txn);
  };

  Tlp tlp;
  try {
    tlp = parse_tlp(item.frame.tlp_bytes);
  } catch (const MalformedTlp& e) {
    hold(ErrorKind::MalformedTlp, 0, e.what());
    return;
  }
  if (!ecrc_ok(tlp)) return hold(ErrorKind::EcrcFailure, tlp.tag, "ECRC mismatch");
  if (tlp.kind == TlpKind::Msg && !config_.completer_accepts_msg)
    return hold(ErrorKind::UnsupportedRequest, tlp.tag, "message requests not supported");
  if (tlp.kind == TlpKind::Cpl || tlp.kind == TlpKind::CplD)
    return hold(ErrorKind::UnexpectedCompletion, tlp.tag, "completion at completer");
  if (!fits) return hold(ErrorKind::ReceiverOverflow, tlp.tag, "TLP beyond advertised credits");

  if (tlp.kind == TlpKind::MemWr) {
    Snapshot window;
    window.cycle = now_;
    window.delivered_image = tlp.payload;
    window.golden_cursor = tlp.address;
    window.next_expected_seq = down_.rx_dl.expected_seq;
    if (auto m = compare_and_flag(golden_, window))
      return hold(ErrorKind::CorruptedRxTlp, tlp.tag,
                  "delivered data diverges from golden at offset " + std::to_string(m->offset));
  }
  down_.slot[5] = std::move(item);
}

void Simulator::requester_rx_tl(Frame item) {
  auto hold = [&](ErrorKind kind, std::uint32_t tag, std::string detail) {
    ErrorEvent ev;
    ev.kind = kind;
    ev.seq_or_tag = tag;
    ev.attributed_fault = item.meta.fault_id;
    ev.detail = std::move(detail);
    const std::uint64_t txn = item.meta.txn_id;
    record_event(std::move(ev), HeldTlp{std::move(item), Dir::Up, {}}, txn);
  };

  Tlp tlp;
  try {
    tlp = parse_tlp(item.frame.tlp_bytes);
  } catch (const MalformedTlp& e) {
    hold(ErrorKind::MalformedTlp, 0, e.what());
    return;
  }
  if (!ecrc_ok(tlp)) return hold(ErrorKind::EcrcFailure, tlp.tag, "ECRC mismatch");
  if (tlp.kind != TlpKind::Cpl && tlp.kind != TlpKind::CplD)
    return hold(ErrorKind::UnsupportedRequest, tlp.tag, "requester accepts completions only");
  auto entry = outstanding_.retire(tlp.tag);
  if (!entry) return hold(ErrorKind::UnexpectedCompletion, tlp.tag, "no outstanding request for tag");

  if (tlp.kind == TlpKind::Cpl) {
    ErrorEvent ev;
    ev.kind = ErrorKind::CompleterAbort;
    ev.seq_or_tag = tlp.tag;
    ev.attributed_fault = item.meta.fault_id ? item.meta.fault_id : entry->fault_id;
    ev.detail = "completion with completer-abort status";
    record_event(std::move(ev), std::nullopt, entry->txn_id);
    return;
  }
  up_.slot[5] = std::move(item);
}

void Simulator::commit(Dir d, Frame item) {
  const Tlp tlp = parse_tlp(item.frame.tlp_bytes);
  if (d == Dir::Down) {
    if (tlp.kind == TlpKind::MemWr) {
      commit_write(tlp, item.meta.txn_id);
    } else if (tlp.kind == TlpKind::MemRd) {
      serve_read(tlp, item.meta);
    }
    down_.rx_credits.free(item.meta.credit_dw);
    return;
  }
  // Read data reaches the requester's consumer.
  if (item.meta.txn_id == kNoTxn) return;
  auto it = expected_completion_.find(item.meta.txn_id);
  if (it != expected_completion_.end()) {
    const Bytes& want = it->second;
    for (std::size_t i = 0; i < tlp.payload.size(); ++i)
      if (i >= want.size() || want[i] != tlp.payload[i]) ++corrupted_bytes_;
    expected_completion_.erase(it);
  }
  for (std::uint64_t id = item.meta.txn_id;; id = *txns_[id].reissue_of) {
    if (!txns_[id].delivered_cycle) txns_[id].delivered_cycle = now_;
    if (!txns_[id].reissue_of) break;
  }
}

void Simulator::commit_write(const Tlp& tlp, std::uint64_t txn_id) {
  const std::uint64_t end = tlp.address + tlp.payload.size();
  if (completer_memory_.size() < end) completer_memory_.resize(end);
  for (std::size_t i = 0; i < tlp.payload.size(); ++i) {
    const std::uint64_t a = tlp.address + i;
    if (a >= golden_.size() || golden_[a] != tlp.payload[i]) ++corrupted_bytes_;
    completer_memory_[a] = tlp.payload[i];
  }
  note_write_delivered(txn_id);
}

void Simulator::note_write_delivered(std::uint64_t txn_id) {
  write_commit_order_.push_back(txn_id);
  delivered_bytes_ += txns_[txn_id].request.payload.size();
  delivered_this_tick_ = true;
  for (std::uint64_t id = txn_id;; id = *txns_[id].reissue_of) {
    if (!txns_[id].delivered_cycle) txns_[id].delivered_cycle = now_;
    if (!txns_[id].reissue_of) break;
  }
}

void Simulator::serve_read(const Tlp& rd, const ItemMeta& meta) {
  Tlp cpl;
  cpl.requester_id = rd.requester_id;
  cpl.tag = rd.tag;
  cpl.address = rd.address;
  ItemMeta out;
  out.txn_id = meta.txn_id;
  out.fault_id = meta.fault_id;
  if (rd.address >= config_.abort_base) {
    cpl.kind = TlpKind::Cpl;
  } else {
    cpl.kind = TlpKind::CplD;
    cpl.length_dw = rd.length_dw;
    cpl.payload.assign(4u * rd.length_dw, 0);
    for (std::size_t i = 0; i < cpl.payload.size(); ++i) {
      const std::uint64_t a = rd.address + i;
      if (a < completer_memory_.size()) cpl.payload[i] = completer_memory_[a];
    }
    out.credit_dw = rd.length_dw;
  }
  if (rd.ecrc_present) cpl = with_ecrc(std::move(cpl));

  Frame f;
  f.frame.tlp_bytes = serialize_tlp(cpl);
  f.meta = out;
  auto stall = stall_tags_.find(rd.tag);
  const OutstandingRequest* req = outstanding_.find(rd.tag);
  if (cpl.kind == TlpKind::CplD && stall != stall_tags_.end() && req && req->fault_id == stall->second.first) {
    withheld_.push_back({std::move(f), now_ + stall->second.second});
    stall_tags_.erase(stall);
    return;
  }
  if (cpl.kind == TlpKind::CplD) expected_completion_[meta.txn_id] = cpl.payload;
  up_.tl_queue.push_back(std::move(f));
}

// ---------------------------------------------------------------------------

void Simulator::check_timers() {
  if (link_.ltssm == Ltssm::L0) {
    for (Dir d : {Dir::Down, Dir::Up}) {
      Direction& D = direction(d);
      if (D.replay.empty()) {
        D.replay.replay_timer = 0;
        continue;
      }
      if (++D.replay.replay_timer < config_.replay_timeout_cycles) continue;
      ErrorEvent ev;
      ev.kind = ErrorKind::ReplayTimeout;
      ev.seq_or_tag = D.replay.entries().front().frame.seq_num;
      if (d == Dir::Down && !drop_ack_faults_.empty()) {
        ev.attributed_fault = drop_ack_faults_.front();
        drop_ack_faults_.pop_front();
      }
      ev.detail = "replay timer expired";
      record_event(std::move(ev));
      D.replay_queue.assign(D.replay.entries().begin(), D.replay.entries().end());
      D.replay.replay_timer = 0;
    }
  }

  for (auto& [tag, req] : outstanding_.expire(now_)) {
    if (auto st = stall_tags_.find(tag); st != stall_tags_.end() && req.fault_id == st->second.first)
      stall_tags_.erase(st);
    ErrorEvent ev;
    ev.kind = ErrorKind::CompletionTimeout;
    ev.seq_or_tag = tag;
    ev.attributed_fault = req.fault_id;
    ev.detail = "no completion within the timeout";
    record_event(std::move(ev), std::nullopt, req.txn_id);
  }

  // Completions held longer than the completion timeout are stale; drop them.
  std::erase_if(withheld_, [&](const Withheld& w) { return w.release_cycle <= now_; });
}

void Simulator::take_snapshot() {
  if (now_ % config_.snapshot_interval != 0 && !delivered_this_tick_) return;
  Snapshot s;
  s.cycle = now_;
  s.next_expected_seq = down_.rx_dl.expected_seq;
  s.credit_state = {down_.rx_credits.hdr_allocated(), down_.rx_credits.data_allocated_dw(),
                    down_.rx_credits.hdr_received, down_.rx_credits.data_received_dw};
  s.golden_cursor = delivered_bytes_;
  latest_snapshot_ = s;
  snapshots_.push_back(std::move(s));
}

// ---------------------------------------------------------------------------
// Fault scheduling and hooks

void Simulator::schedule_faults(const std::vector<FaultSpec>& faults) {
  for (const FaultSpec& f : faults) {
    outcome_index_[f.id] = fault_outcomes_.size();
    fault_outcomes_.push_back({f});
    pending_faults_.emplace(std::make_pair(f.cycle, f.id), f);
  }
}

void Simulator::apply_due_faults() {
  bool applied = false;
  std::vector<FaultSpec> retry;
  while (!pending_faults_.empty() && pending_faults_.begin()->first.first <= now_) {
    FaultSpec f = pending_faults_.begin()->second;
    pending_faults_.erase(pending_faults_.begin());
    FaultOutcome& out = fault_outcomes_[outcome_index_.at(f.id)];
    if (!applied && link_.ltssm == Ltssm::L0) {
      if (auto rec = apply_fault(f, *this)) {
        rec->cycle = now_;
        mutations_.push_back(*rec);
        out.applied = true;
        out.applied_cycle = now_;
        applied = true;
        continue;
      }
    }
    if (++out.retries > config_.max_fault_retries) {
      out.expired = true;
      continue;
    }
    retry.push_back(f);
  }
  for (const FaultSpec& f : retry) pending_faults_.emplace(std::make_pair(now_ + 1, f.id), f);
}

bool Simulator::down_head_clean() const {
  if (down_.tl_queue.empty()) return false;
  const Frame& f = down_.tl_queue.front();
  return !f.meta.fault_id && !txn_tainted(f.meta.txn_id);
}

void Simulator::taint(Frame& item, std::uint32_t fault_id) {
  item.meta.fault_id = fault_id;
  tainted_txns_.insert(item.meta.txn_id);
}

void Simulator::arm_drop_ack(std::uint32_t fault_id) {
  drop_ack_faults_.push_back(fault_id);
  std::erase_if(down_.dllps, [](const Direction::DllpInFlight& x) {
    return x.dllp.kind == DllpKind::Ack && !x.fault_id;
  });
}

void Simulator::inject_completion(const Tlp& completion, std::uint32_t fault_id) {
  Frame f;
  f.frame.tlp_bytes = serialize_tlp(completion);
  f.meta.txn_id = kNoTxn;
  f.meta.fault_id = fault_id;
  f.meta.credit_dw = completion.length_dw;
  up_.tl_queue.push_back(std::move(f));
}

void Simulator::arm_fc_suppression(std::uint32_t fault_id) { fc_suppress_faults_.push_back(fault_id); }
void Simulator::arm_credit_violation(std::uint32_t fault_id) { credit_violation_faults_.push_back(fault_id); }

void Simulator::arm_completion_stall(std::uint8_t tag, std::uint32_t fault_id, std::uint64_t stall_cycles) {
  stall_tags_[tag] = {fault_id, stall_cycles};
  if (auto* req = outstanding_.find(tag)) {
    req->fault_id = fault_id;
    tainted_txns_.insert(req->txn_id);
  }
}

std::uint8_t Simulator::unused_tag_from(std::uint8_t from) const {
  std::uint8_t t = from;
  for (int i = 0; i < 256 && (outstanding_.contains(t) || stall_tags_.count(t)); ++i) t = static_cast<std::uint8_t>(t + 1);
  return t;
}

bool Simulator::downstream_dl_clean() const {
  if (down_.rx_dl.nak_scheduled || !down_.replay_queue.empty()) return false;
  for (const auto& x : down_.dllps)
    if (x.dllp.kind == DllpKind::Nak) return false;
  for (std::size_t k = 1; k <= 4; ++k)
    if (down_.slot[k] && down_.slot[k]->meta.fault_id) return false;
  return true;
}

bool Simulator::corrupt_post_dl_payload(std::size_t byte_index, std::uint8_t xor_mask) {
  auto& s = down_.slot[4];
  if (!s) return false;
  Bytes& b = s->frame.tlp_bytes;
  if (b.empty() || b[0] != static_cast<std::uint8_t>(TlpKind::MemWr)) return false;
  if (kTlpHeaderBytes + byte_index >= b.size()) return false;
  b[kTlpHeaderBytes + byte_index] ^= xor_mask;
  return true;
}

bool Simulator::quiescent() const {
  return link_.ltssm == Ltssm::L0 && down_.idle() && up_.idle() && outstanding_.size() == 0 &&
         pending_accept_.empty() && pending_recover_.empty() && reissue_queue_.empty() &&
         baseline_drops_.empty() && pending_faults_.empty() && drop_ack_faults_.empty() &&
         fc_suppress_faults_.empty() && credit_violation_faults_.empty() && violations_in_flight_.empty() &&
         withheld_.empty() &&
         !down_.rx_credits.dirty;
}

}  // namespace pcie_sim
