// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/fault.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "pcie_sim/simulator.hpp"

namespace pcie_sim {

std::vector<FaultSpec> gen_campaign(std::uint64_t seed, std::uint32_t count_per_kind, std::uint64_t horizon) {
  const std::uint64_t n = kFaultKindCount * static_cast<std::uint64_t>(count_per_kind);
  if (n == 0) return {};
  if (n * kMinFaultSpacing > horizon)
    throw HorizonTooSmall("horizon " + std::to_string(horizon) + " cannot hold " + std::to_string(n) +
                          " faults spaced " + std::to_string(kMinFaultSpacing) + " cycles apart");
  SplitMix64 rng(seed);
  const std::uint64_t slack = horizon - n * kMinFaultSpacing;
  std::vector<std::uint64_t> offsets(n);
  for (auto& o : offsets) o = rng.below(slack + 1);
  std::sort(offsets.begin(), offsets.end());

  std::vector<FaultKind> kinds;
  kinds.reserve(n);
  for (FaultKind k : all_fault_kinds())
    for (std::uint32_t i = 0; i < count_per_kind; ++i) kinds.push_back(k);
  for (std::size_t i = kinds.size() - 1; i > 0; --i) std::swap(kinds[i], kinds[rng.below(i + 1)]);

  std::vector<FaultSpec> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = static_cast<std::uint32_t>(i);
    out[i].cycle = offsets[i] + kMinFaultSpacing * i;
    out[i].kind = kinds[i];
    out[i].param = rng.next();
    out[i].seed = rng.next();
  }
  return out;
}

namespace {

bool untainted(const Simulator& sim, const Frame& f) { return !f.meta.fault_id && !sim.txn_tainted(f.meta.txn_id); }

Frame* down_slot(Simulator& sim, std::size_t k) {
  auto& s = sim.direction(Dir::Down).slot[k];
  return s ? &*s : nullptr;
}

TlpKind kind_byte(const Frame& f) { return static_cast<TlpKind>(f.frame.tlp_bytes.at(0)); }

MutationRecord mutation(const FaultSpec& spec, std::string what, std::uint64_t golden, std::uint64_t mutated) {
  return MutationRecord{spec.id, spec.kind, spec.cycle, std::move(what), golden, mutated};
}

// Frame-level faults need a quiet receive path so the consequence is the one
// the receiver reports for this frame and not a side effect of an earlier one.
Frame* clean_frame(Simulator& sim, std::size_t k) {
  if (!sim.downstream_dl_clean()) return nullptr;
  Frame* f = down_slot(sim, k);
  return f && untainted(sim, *f) ? f : nullptr;
}

// A TLP still inside the requester's transaction layer: the one just issued
// or one waiting for credits.
Frame* pre_tx(Simulator& sim, std::optional<TlpKind> kind) {
  auto ok = [&](const Frame& f) { return untainted(sim, f) && (!kind || kind_byte(f) == *kind); };
  Direction& d = sim.direction(Dir::Down);
  if (d.slot[0] && ok(*d.slot[0])) return &*d.slot[0];
  // An armed credit bypass will take the queue head; leave the queue clean.
  if (sim.credit_violation_armed()) return nullptr;
  for (Frame& f : d.tl_queue)
    if (ok(f)) return &f;
  return nullptr;
}

void reserialize(Frame& f, const Tlp& tlp) {
  f.frame.tlp_bytes = serialize_tlp(tlp.ecrc_present ? with_ecrc(tlp) : tlp);
}

}  // namespace

std::optional<MutationRecord> apply_fault(const FaultSpec& spec, Simulator& sim) {
  const std::uint32_t id = spec.id;
  switch (spec.kind) {
    case FaultKind::FlipTlpPayloadBit: {
      Frame* f = clean_frame(sim, 2);
      if (!f || kind_byte(*f) != TlpKind::MemWr) return std::nullopt;
      const Tlp tlp = parse_tlp(f->frame.tlp_bytes);
      if (tlp.payload.empty()) return std::nullopt;
      const std::uint64_t bit = spec.param % (tlp.payload.size() * 8);
      auto& b = f->frame.tlp_bytes[kTlpHeaderBytes + bit / 8];
      const std::uint8_t before = b;
      b ^= static_cast<std::uint8_t>(1u << (bit % 8));
      sim.taint(*f, id);
      return mutation(spec, "payload bit " + std::to_string(bit), before, b);
    }
    case FaultKind::FlipLcrcBit: {
      Frame* f = clean_frame(sim, 2);
      if (!f) return std::nullopt;
      const std::uint32_t before = f->frame.lcrc;
      f->frame.lcrc ^= 1u << (spec.param % 32);
      sim.taint(*f, id);
      return mutation(spec, "lcrc", before, f->frame.lcrc);
    }
    case FaultKind::PlSymbolError: {
      Frame* f = clean_frame(sim, 2);
      if (!f) return std::nullopt;
      f->meta.symbol_error = true;
      sim.taint(*f, id);
      return mutation(spec, "symbol", 0, 1);
    }
    case FaultKind::FlipSeqNum: {
      Frame* f = clean_frame(sim, 1);
      if (!f) return std::nullopt;
      const std::uint16_t expected = sim.direction(Dir::Down).rx_dl.expected_seq;
      const std::uint16_t seq = f->frame.seq_num;
      if (!seq_le(expected, seq)) return std::nullopt;
      // Push the number forward so the receiver sees a gap.
      std::uint16_t mutated = seq_next(seq, 2);
      for (unsigned i = 0; i < 10; ++i) {
        const unsigned bit = 1 + (spec.param + i) % 10;
        if (!(seq & (1u << bit))) {
          mutated = static_cast<std::uint16_t>(seq | (1u << bit));
          break;
        }
      }
      f->frame = frame_bytes(mutated, std::move(f->frame.tlp_bytes));
      sim.taint(*f, id);
      return mutation(spec, "seq", seq, mutated);
    }
    case FaultKind::FlipEcrcBit: {
      Frame* f = down_slot(sim, 4);
      if (!f || !untainted(sim, *f)) return std::nullopt;
      const Tlp tlp = parse_tlp(f->frame.tlp_bytes);
      if (!tlp.ecrc_present) return std::nullopt;
      const std::uint64_t bit = spec.param % 32;
      auto& b = f->frame.tlp_bytes[f->frame.tlp_bytes.size() - 4 + bit / 8];
      const std::uint8_t before = b;
      b ^= static_cast<std::uint8_t>(1u << (bit % 8));
      sim.taint(*f, id);
      return mutation(spec, "ecrc bit " + std::to_string(bit), before, b);
    }
    case FaultKind::MalformHeader: {
      Frame* f = pre_tx(sim, std::nullopt);
      if (!f) return std::nullopt;
      const std::uint8_t before = f->frame.tlp_bytes[0];
      // Codes 0x06..0xFF are not assigned to any TLP kind.
      f->frame.tlp_bytes[0] = static_cast<std::uint8_t>(0x06 + spec.param % 0xFA);
      sim.taint(*f, id);
      return mutation(spec, "kind byte", before, f->frame.tlp_bytes[0]);
    }
    case FaultKind::SendUnsupportedRequest: {
      Frame* f = pre_tx(sim, TlpKind::MemRd);
      if (!f) return std::nullopt;
      Tlp tlp = parse_tlp(f->frame.tlp_bytes);
      tlp.kind = TlpKind::Msg;
      tlp.length_dw = 0;
      reserialize(*f, tlp);
      sim.taint(*f, id);
      return mutation(spec, "kind", static_cast<std::uint8_t>(TlpKind::MemRd), static_cast<std::uint8_t>(TlpKind::Msg));
    }
    case FaultKind::ForceCompleterAbort: {
      Frame* f = pre_tx(sim, TlpKind::MemRd);
      if (!f) return std::nullopt;
      Tlp tlp = parse_tlp(f->frame.tlp_bytes);
      const std::uint64_t before = tlp.address;
      tlp.address = sim.config().abort_base | (tlp.address & 0xFFFF'FFFCull);
      reserialize(*f, tlp);
      sim.taint(*f, id);
      return mutation(spec, "address", before, tlp.address);
    }
    case FaultKind::StallCompletion: {
      // Only reads not yet framed: a replayed duplicate further down the
      // pipeline may belong to a request that has already been served.
      const Frame* rd = pre_tx(sim, TlpKind::MemRd);
      if (!rd) return std::nullopt;
      const std::optional<std::uint8_t> tag = rd->frame.tlp_bytes[3];
      const std::uint64_t stall = sim.config().completion_timeout_cycles + 1 + spec.param % 64;
      sim.arm_completion_stall(*tag, id, stall);
      return mutation(spec, "completion stall for tag " + std::to_string(*tag), 0, stall);
    }
    case FaultKind::InjectUnexpectedCompletion: {
      // A completion nobody asked for, on a tag with no outstanding request.
      SplitMix64 rng(spec.seed);
      Tlp cpl;
      cpl.kind = TlpKind::CplD;
      cpl.requester_id = sim.config().requester_id;
      cpl.tag = sim.unused_tag_from(static_cast<std::uint8_t>(sim.next_tag_hint() + 128));
      if (sim.outstanding().contains(cpl.tag)) return std::nullopt;
      cpl.length_dw = static_cast<std::uint16_t>(1 + spec.param % 16);
      cpl.payload.resize(4u * cpl.length_dw);
      for (auto& b : cpl.payload) b = static_cast<std::uint8_t>(rng.next());
      sim.inject_completion(with_ecrc(cpl), id);
      return mutation(spec, "spurious completion tag", 0, cpl.tag);
    }
    case FaultKind::DropAck:
      sim.arm_drop_ack(id);
      return mutation(spec, "ack suppression", 0, 1);
    case FaultKind::FlipDllpCrcBit: {
      Direction& d = sim.direction(Dir::Down);
      // The Ack must be followed by another one (a newer Ack or the pending
      // repeat), otherwise losing it would also stall the replay buffer.
      for (auto it = d.dllps.rbegin(); it != d.dllps.rend(); ++it) {
        if (it->dllp.kind != DllpKind::Ack || it->fault_id) continue;
        const bool superseded = it->dllp.seq_num != d.last_ack.seq || !d.last_ack.repeated;
        if (!superseded) continue;
        const std::uint16_t before = it->dllp.crc16;
        it->dllp.crc16 ^= static_cast<std::uint16_t>(1u << (spec.param % 16));
        it->fault_id = id;
        return mutation(spec, "ack crc16", before, it->dllp.crc16);
      }
      return std::nullopt;
    }
    case FaultKind::ViolateCredit: {
      sim.arm_credit_violation(id);
      return mutation(spec, "credit gate bypass", 0, 1);
    }
    case FaultKind::SuppressReplayAck:
      sim.arm_fc_suppression(id);
      return mutation(spec, "credit update suppression", 0, 1);
    case FaultKind::BreakTraining:
      sim.break_training(id);
      return mutation(spec, "training", 0, 1);
  }
  return std::nullopt;
}

std::string format_fault_line(const FaultSpec& spec) {
  std::ostringstream os;
  os << "fault=" << spec.id << ',' << spec.cycle << ',' << to_string(spec.kind) << ',' << spec.param << ','
     << spec.seed;
  return os.str();
}

std::optional<FaultSpec> parse_fault_value(const std::string& value) {
  std::vector<std::string> f;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) f.push_back(part);
  if (f.size() != 5) return std::nullopt;
  auto num = [](const std::string& s, auto& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && !s.empty();
  };
  FaultSpec spec;
  auto kind = fault_kind_from_string(f[2]);
  if (!kind || !num(f[0], spec.id) || !num(f[1], spec.cycle) || !num(f[3], spec.param) || !num(f[4], spec.seed))
    return std::nullopt;
  spec.kind = *kind;
  return spec;
}

}  // namespace pcie_sim
