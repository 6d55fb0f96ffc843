// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/link.hpp"

namespace pcie_sim {

const char* to_string(Ltssm state) {
  switch (state) {
    case Ltssm::Detect: return "Detect";
    case Ltssm::Polling: return "Polling";
    case Ltssm::Config: return "Config";
    case Ltssm::L0: return "L0";
    case Ltssm::RecoveryRetrain: return "RecoveryRetrain";
    case Ltssm::Disabled: return "Disabled";
  }
  return "?";
}

namespace {

LinkState enter(const LinkState& from, Ltssm to) {
  LinkState s = from;
  s.ltssm = to;
  s.cycles_in_state = 0;
  return s;
}

bool training(Ltssm s) {
  return s == Ltssm::Detect || s == Ltssm::Polling || s == Ltssm::Config || s == Ltssm::RecoveryRetrain;
}

}  // namespace

LtssmStep ltssm_step(const LinkState& state, LtssmEvent event) {
  switch (event) {
    case LtssmEvent::TrainOk:
      switch (state.ltssm) {
        case Ltssm::Detect: return {enter(state, Ltssm::Polling)};
        case Ltssm::Polling: return {enter(state, Ltssm::Config)};
        case Ltssm::Config: return {enter(state, Ltssm::L0)};
        default: return {state};
      }
    case LtssmEvent::TrainFail:
      if (training(state.ltssm)) return {enter(state, Ltssm::Detect), true};
      if (state.ltssm == Ltssm::L0) return {state, true};
      return {state};
    case LtssmEvent::FatalSeen:
      if (state.ltssm == Ltssm::L0) {
        LinkState s = enter(state, Ltssm::RecoveryRetrain);
        ++s.retrain_count;
        return {s};
      }
      return {state};
    case LtssmEvent::RetrainDone:
      if (state.ltssm == Ltssm::RecoveryRetrain) return {enter(state, Ltssm::L0)};
      return {state};
  }
  return {state};
}

// ---------------------------------------------------------------------------

FlowControl FlowControl::advertised(std::uint32_t hdr, std::uint32_t data_dw) {
  FlowControl fc;
  fc.hdr_limit = hdr;
  fc.data_limit_dw = data_dw;
  return fc;
}

FlowControl FlowControl::unlimited() {
  FlowControl fc;
  fc.infinite = true;
  return fc;
}

bool FlowControl::can_send(std::uint32_t data_dw) const {
  if (infinite) return true;
  return hdr_consumed + 1 <= hdr_limit && data_consumed_dw + data_dw <= data_limit_dw;
}

void FlowControl::consume(std::uint32_t data_dw) {
  hdr_consumed += 1;
  data_consumed_dw += data_dw;
}

void FlowControl::update(std::uint8_t hdr_field, std::uint16_t data_field) {
  if (infinite) return;
  // Limits only move forward; the wrapped delta recovers the full counter.
  // An update older than the current limit shows up as a delta past half the
  // field range and is ignored.
  const auto dh = static_cast<std::uint8_t>(hdr_field - static_cast<std::uint8_t>(hdr_limit));
  const auto dd = static_cast<std::uint16_t>(data_field - static_cast<std::uint16_t>(data_limit_dw));
  if (dh >= 0x80 || dd >= 0x8000) return;
  hdr_limit += dh;
  data_limit_dw += dd;
}

RxCredits RxCredits::with_capacity(std::uint32_t hdr, std::uint32_t data_dw) {
  RxCredits rx;
  rx.capacity_hdr = hdr;
  rx.capacity_data_dw = data_dw;
  rx.hdr_advertised = hdr;
  rx.data_advertised_dw = data_dw;
  return rx;
}

bool RxCredits::receive(std::uint32_t data_dw) {
  hdr_received += 1;
  data_received_dw += data_dw;
  if (infinite) return true;
  return hdr_received <= hdr_advertised && data_received_dw <= data_advertised_dw;
}

void RxCredits::free(std::uint32_t data_dw) {
  hdr_freed += 1;
  data_freed_dw += data_dw;
  dirty = true;
}

Dllp RxCredits::advertise() {
  hdr_advertised = hdr_allocated();
  data_advertised_dw = data_allocated_dw();
  dirty = false;
  return make_fc_update(static_cast<std::uint8_t>(hdr_advertised), static_cast<std::uint16_t>(data_advertised_dw));
}

// ---------------------------------------------------------------------------

void ReplayBuffer::push(Frame frame) {
  if (full()) throw std::logic_error("replay buffer overflow");
  entries_.push_back(std::move(frame));
}

std::size_t ReplayBuffer::ack(std::uint16_t seq) {
  std::size_t removed = 0;
  while (!entries_.empty() && seq_le(entries_.front().frame.seq_num, seq)) {
    entries_.pop_front();
    ++removed;
  }
  return removed;
}

// ---------------------------------------------------------------------------

void OutstandingRequests::insert(std::uint8_t tag, OutstandingRequest req) {
  if (!table_.emplace(tag, req).second) throw std::logic_error("duplicate in-flight tag");
}

std::optional<OutstandingRequest> OutstandingRequests::retire(std::uint8_t tag) {
  auto it = table_.find(tag);
  if (it == table_.end()) return std::nullopt;
  OutstandingRequest r = it->second;
  table_.erase(it);
  return r;
}

OutstandingRequest* OutstandingRequests::find(std::uint8_t tag) {
  auto it = table_.find(tag);
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<std::pair<std::uint8_t, OutstandingRequest>> OutstandingRequests::expire(std::uint64_t now) {
  std::vector<std::pair<std::uint8_t, OutstandingRequest>> out;
  for (auto it = table_.begin(); it != table_.end();) {
    if (it->second.timeout_at <= now) {
      out.emplace_back(it->first, it->second);
      it = table_.erase(it);
    } else {
      ++it;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

DlResult RxDataLink::receive(const DlFrame& frame) {
  DlResult r;
  if (!lcrc_ok(frame)) {
    r.outcome = DlOutcome::Nak;
    r.error = ErrorKind::BadTlp;
    r.send_nak = !nak_scheduled;
    nak_scheduled = true;
    r.expected_seq = expected_seq;
    return r;
  }
  if (frame.seq_num == expected_seq) {
    r.outcome = DlOutcome::Accept;
    nak_scheduled = false;
    expected_seq = seq_next(expected_seq);
    r.expected_seq = expected_seq;
    return r;
  }
  r.expected_seq = expected_seq;
  if (seq_le(frame.seq_num, expected_seq)) {
    r.outcome = DlOutcome::Duplicate;
    return r;
  }
  r.outcome = DlOutcome::Nak;
  if (!nak_scheduled) {
    r.error = ErrorKind::DllProtocolError;
    r.send_nak = true;
    nak_scheduled = true;
  }
  return r;
}

}  // namespace pcie_sim
