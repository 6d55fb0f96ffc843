// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <map>

#include "pcie_sim/harness.hpp"
#include "pcie_sim/simulator.hpp"

using namespace pcie_sim;

namespace {

Simulator trained(SimConfig config = {}) {
  Simulator sim(config);
  while (sim.link().ltssm != Ltssm::L0) sim.tick();
  return sim;
}

Request write_req(std::uint64_t addr, std::size_t bytes = 64) {
  Request r;
  r.kind = TlpKind::MemWr;
  r.address = addr;
  r.payload.assign(bytes, 0);
  for (std::size_t i = 0; i < bytes; ++i) r.payload[i] = static_cast<std::uint8_t>(addr + i);
  return r;
}

Request read_req(std::uint64_t addr, std::uint16_t dw = 16) {
  Request r;
  r.kind = TlpKind::MemRd;
  r.address = addr;
  r.read_length_dw = dw;
  return r;
}

CampaignRun one_fault(FaultKind kind, RecoveryMode mode) {
  CampaignConfig c;
  c.mode = mode;
  c.horizon_cycles = 3001;
  c.faults = {FaultSpec{0, 3000, kind, 12345, 678}};
  return execute_campaign(c);
}

}  // namespace

TEST_SUITE("link") {
  TEST_CASE("ltssm transitions") {
    LinkState s;
    s = ltssm_step(s, LtssmEvent::TrainOk).next;
    CHECK(s.ltssm == Ltssm::Polling);
    s = ltssm_step(s, LtssmEvent::TrainOk).next;
    CHECK(s.ltssm == Ltssm::Config);
    const LtssmStep fail = ltssm_step(s, LtssmEvent::TrainFail);
    CHECK(fail.next.ltssm == Ltssm::Detect);
    CHECK(fail.training_error);

    LinkState l0{Ltssm::L0, 10, 0};
    CHECK(ltssm_step(l0, LtssmEvent::RetrainDone).next.ltssm == Ltssm::L0);
    CHECK(ltssm_step(l0, LtssmEvent::FatalSeen).next.ltssm == Ltssm::RecoveryRetrain);
    const LtssmStep in_l0 = ltssm_step(l0, LtssmEvent::TrainFail);
    CHECK(in_l0.training_error);
    CHECK(in_l0.next.ltssm == Ltssm::L0);
    LinkState rr{Ltssm::RecoveryRetrain, 40, 0};
    CHECK(ltssm_step(rr, LtssmEvent::RetrainDone).next.ltssm == Ltssm::L0);
  }

  TEST_CASE("flow control wraps the wire fields") {
    FlowControl fc = FlowControl::advertised(8, 256);
    CHECK(fc.can_send(256));
    CHECK_FALSE(fc.can_send(257));
    for (int i = 0; i < 8; ++i) fc.consume(0);
    CHECK_FALSE(fc.can_send(0));
    // Walk the cumulative limit past the 8-bit wrap in steps of 100.
    for (std::uint64_t limit = 108; limit <= 308; limit += 100) {
      fc.update(static_cast<std::uint8_t>(limit % 256), static_cast<std::uint16_t>(256 + limit));
      CHECK(fc.hdr_limit == limit);
    }
    CHECK(fc.can_send(0));
    // An older update that arrives late must not shrink the limit.
    fc.update(static_cast<std::uint8_t>(300 % 256), 256 + 300);
    CHECK(fc.hdr_limit == 308);
    CHECK(FlowControl::unlimited().can_send(10'000));
  }

  TEST_CASE("receiver credits") {
    RxCredits rx = RxCredits::with_capacity(2, 32);
    CHECK(rx.receive(16));
    CHECK(rx.receive(16));
    CHECK_FALSE(rx.receive(0));
    rx.free(16);
    CHECK(rx.dirty);
    const Dllp d = rx.advertise();
    CHECK(d.kind == DllpKind::FcUpdate);
    CHECK(d.hdr_credits == 3);
    CHECK(d.data_credits_dw == 48);
    CHECK_FALSE(rx.dirty);
  }

  TEST_CASE("replay buffer cumulative ack") {
    ReplayBuffer rb;
    for (std::uint16_t s = 4094; s != 3; s = seq_next(s)) {
      Frame f;
      f.frame.seq_num = s;
      rb.push(f);
    }
    CHECK(rb.size() == 5);
    CHECK(rb.ack(0) == 3);
    CHECK(rb.entries().front().frame.seq_num == 1);
    CHECK(rb.ack(0) == 0);
  }

  TEST_CASE("outstanding request expiry order") {
    OutstandingRequests o;
    o.insert(9, {0, TlpKind::MemRd, 50, 1, std::nullopt});
    o.insert(3, {0, TlpKind::MemRd, 40, 2, std::nullopt});
    o.insert(4, {0, TlpKind::MemRd, 90, 3, std::nullopt});
    const auto gone = o.expire(60);
    REQUIRE(gone.size() == 2);
    CHECK(gone[0].first == 3);
    CHECK(gone[1].first == 9);
    CHECK(o.contains(4));
    CHECK(o.retire(4).has_value());
    CHECK_FALSE(o.retire(4).has_value());
  }

  TEST_CASE("receiver data link outcomes") {
    Tlp t;
    t.kind = TlpKind::MemWr;
    t.length_dw = 1;
    t.payload = {1, 2, 3, 4};
    RxDataLink rx;
    CHECK(rx.receive(frame_tlp(0, t)).outcome == DlOutcome::Accept);
    CHECK(rx.expected_seq == 1);
    CHECK(rx.receive(frame_tlp(0, t)).outcome == DlOutcome::Duplicate);

    DlFrame bad = frame_tlp(1, t);
    bad.tlp_bytes.back() ^= 0x01;
    const DlResult r = rx.receive(bad);
    CHECK(r.outcome == DlOutcome::Nak);
    CHECK(r.error == ErrorKind::BadTlp);
    CHECK(r.send_nak);

    RxDataLink rx2;
    rx2.expected_seq = 5;
    const DlResult ahead = rx2.receive(frame_tlp(7, t));
    CHECK(ahead.outcome == DlOutcome::Nak);
    CHECK(ahead.error == ErrorKind::DllProtocolError);
  }

  TEST_CASE("submit gates") {
    Simulator cold;
    CHECK_THROWS_AS(cold.submit(read_req(0)), SubmitError);

    Simulator sim = trained();
    CHECK(sim.submit(read_req(0)) == 0);
    for (int i = 1; i < 256; ++i) sim.submit(read_req(0));
    try {
      sim.submit(read_req(0));
      FAIL("expected NoFreeTag");
    } catch (const SubmitError& e) {
      CHECK(e.code() == SubmitError::Code::NoFreeTag);
    }
  }

  TEST_CASE("a clean write commits six cycles after submission") {
    Simulator sim = trained();
    const std::uint64_t c = sim.now();
    sim.submit(write_req(0));
    while (!sim.transactions()[0].delivered_cycle) sim.tick();
    CHECK(*sim.transactions()[0].delivered_cycle == c + 6);
    CHECK(std::equal(sim.golden_stream().begin(), sim.golden_stream().end(), sim.delivered_image().begin()));
  }

  TEST_CASE("idle ticks produce no events") {
    Simulator sim = trained();
    for (int i = 0; i < 100; ++i) CHECK(sim.tick().empty());
    CHECK_FALSE(sim.trace().back().tx_data);
    CHECK_FALSE(sim.trace().back().rx_data);
    CHECK(sim.quiescent());
  }

  TEST_CASE("fault-free traffic: order, credits, reads") {
    Simulator sim = trained();
    bool credits_ok = true;
    for (int i = 0; i < 400; ++i) {
      sim.submit(write_req(64u * static_cast<std::uint64_t>(i)));
      if (i % 3 == 0) sim.submit(read_req(64u * static_cast<std::uint64_t>(i / 2)));
      for (int k = 0; k < 4; ++k) {
        sim.tick();
        credits_ok = credits_ok && sim.direction(Dir::Down).tx_credits.within_limits();
      }
    }
    for (int k = 0; k < 5000 && !sim.quiescent(); ++k) sim.tick();
    CHECK(sim.quiescent());
    CHECK(credits_ok);
    CHECK(sim.events().empty());
    CHECK(sim.max_credit_overdraw() == 0);
    const auto& order = sim.write_commit_order();
    CHECK(std::is_sorted(order.begin(), order.end()));
    CHECK(std::equal(sim.golden_stream().begin(), sim.golden_stream().end(), sim.delivered_image().begin()));
    for (const Transaction& t : sim.transactions()) CHECK(t.delivered_cycle.has_value());
  }

  TEST_CASE("replayed frames are bit-identical to the original") {
    for (FaultKind k : {FaultKind::FlipLcrcBit, FaultKind::PlSymbolError, FaultKind::FlipTlpPayloadBit}) {
      CAPTURE(to_string(k));
      const CampaignRun run = one_fault(k, RecoveryMode::Proposed);
      std::map<std::uint16_t, Bytes> first_copy;
      int replays = 0;
      for (const TraceRecord& r : run.sim->trace()) {
        if (!r.tx_data) continue;
        const std::uint16_t seq = static_cast<std::uint16_t>((*r.tx_data)[0] << 8 | (*r.tx_data)[1]);
        auto [it, fresh] = first_copy.emplace(seq, *r.tx_data);
        if (!fresh) {
          ++replays;
          CHECK(it->second == *r.tx_data);
        }
      }
      CHECK(replays > 0);
    }
  }

  TEST_CASE("no frame moves outside L0") {
    const CampaignRun run = one_fault(FaultKind::BreakTraining, RecoveryMode::Baseline);
    std::uint64_t down = 0;
    for (const TraceRecord& r : run.sim->trace()) {
      if (r.ltssm == Ltssm::L0) continue;
      ++down;
      CHECK_FALSE(r.tx_data);
      CHECK_FALSE(r.rx_data);
    }
    CHECK(down > 0);
  }
}
