// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "pcie_sim/harness.hpp"
#include "pcie_sim/recovery.hpp"

using namespace pcie_sim;

namespace {

Snapshot image_at(std::uint64_t cursor, Bytes image) {
  Snapshot s;
  s.golden_cursor = cursor;
  s.delivered_image = std::move(image);
  return s;
}

ErrorEvent event_of(ErrorKind k, std::uint64_t cycle = 0) {
  ErrorEvent e;
  e.kind = k;
  e.cycle = cycle;
  return e;
}

CampaignRun one_fault(FaultKind kind, RecoveryMode mode, std::uint64_t snapshot_interval = 1) {
  CampaignConfig c;
  c.mode = mode;
  c.snapshot_interval = snapshot_interval;
  c.horizon_cycles = 3001;
  c.faults = {FaultSpec{0, 3000, kind, 12345, 678}};
  return execute_campaign(c);
}

}  // namespace

TEST_SUITE("recovery") {
  TEST_CASE("compare and flag reports the first divergence") {
    Bytes golden(32);
    for (std::size_t i = 0; i < golden.size(); ++i) golden[i] = static_cast<std::uint8_t>(i * 7);

    CHECK_FALSE(compare_and_flag(golden, image_at(0, Bytes(golden.begin(), golden.begin() + 20))));

    Bytes one = golden;
    one[12] ^= 0xFF;
    CHECK(compare_and_flag(golden, image_at(0, one)) == Mismatch{12, golden[12], one[12]});

    Bytes two = golden;
    two[4] ^= 1;
    two[9] ^= 1;
    CHECK(compare_and_flag(golden, image_at(0, two))->offset == 4);

    // The image is positioned at the cursor.
    Bytes tail(golden.begin() + 16, golden.end());
    tail[3] ^= 0x10;
    CHECK(compare_and_flag(golden, image_at(16, tail))->offset == 19);

    // Delivered bytes past the end of the golden stream are divergent.
    Bytes longer = golden;
    longer.push_back(0);
    CHECK(compare_and_flag(golden, image_at(0, longer))->offset == 32);
  }

  TEST_CASE("recover rewrites the range one cycle after acceptance") {
    Bytes golden(64, 0xA5);
    Bytes delivered(64, 0xA5);
    delivered[10] = 0x00;
    InterruptEvent irq{event_of(ErrorKind::CorruptedRxTlp, 100), 100, 101};
    Snapshot snap;
    snap.cycle = 100;
    const RecoveryRecord r = recover(snap, irq, golden, {0, 64}, delivered);
    CHECK(delivered == golden);
    CHECK(r.latency_cycles == 1);
    CHECK(r.corrected_cycle == 102);
    CHECK(r.bytes_corrected == 64);

    snap.cycle = 96;
    irq.event.cycle = 99;
    CHECK_THROWS_AS(recover(snap, irq, golden, {0, 64}, delivered), SnapshotStale);
  }

  TEST_CASE("fatal disposition by mode") {
    const LinkState l0{Ltssm::L0, 0, 0};
    const Disposition p = handle_fatal(event_of(ErrorKind::DllProtocolError), RecoveryMode::Proposed, l0, 40);
    CHECK(p.link_down_cycles == 0);
    CHECK(p.recovered);
    CHECK(p.link.ltssm == Ltssm::L0);
    const Disposition b = handle_fatal(event_of(ErrorKind::DllProtocolError), RecoveryMode::Baseline, l0, 40);
    CHECK(b.link_down_cycles == 40);
    CHECK(b.recovered);
    CHECK(b.link.ltssm == Ltssm::RecoveryRetrain);
    CHECK_THROWS_AS(handle_fatal(event_of(ErrorKind::BadTlp), RecoveryMode::Proposed, l0, 40), std::invalid_argument);
  }

  TEST_CASE("corruption past every integrity check is masked") {
    std::uint64_t hooked = 0;
    // No ECRC, so only the delivered-stream comparison can see the damage.
    Simulator sim;
    while (sim.link().ltssm != Ltssm::L0) sim.tick();
    Request w;
    w.kind = TlpKind::MemWr;
    w.address = 0;
    w.payload.assign(64, 0x3C);
    w.ecrc = false;
    sim.submit(w);
    while (!hooked) {
      sim.tick();
      if (sim.corrupt_post_dl_payload(5, 0x80)) hooked = sim.now();
    }
    for (int i = 0; i < 50; ++i) sim.tick();

    REQUIRE(sim.events().size() == 1);
    CHECK(sim.events()[0].kind == ErrorKind::CorruptedRxTlp);
    REQUIRE(sim.recoveries().size() == 1);
    const RecoveryRecord& r = sim.recoveries()[0];
    CHECK(r.latency_cycles == 1);
    CHECK(r.corrected_cycle - r.raised_cycle == 2);
    CHECK(r.bytes_corrected == 64);
    CHECK(sim.corrupted_bytes_delivered() == 0);
    CHECK(std::equal(sim.golden_stream().begin(), sim.golden_stream().end(), sim.delivered_image().begin()));
    CHECK(sim.trace().at(r.corrected_cycle).pr_recovery);
  }

  TEST_CASE("stale snapshot falls back to re-issue") {
    const CampaignRun run = one_fault(FaultKind::FlipEcrcBit, RecoveryMode::Proposed, 8);
    REQUIRE(run.sim->events().size() == 1);
    CHECK(run.sim->events()[0].cycle % 8 != 0);
    CHECK(run.sim->stale_recoveries() == 1);
    CHECK(run.sim->recoveries().empty());
    CHECK(run.report.corrupted_bytes_delivered == 0);
  }

  TEST_CASE("non-fatal errors are repaired by a fresh request") {
    for (FaultKind k : {FaultKind::FlipEcrcBit, FaultKind::SendUnsupportedRequest, FaultKind::ForceCompleterAbort,
                        FaultKind::StallCompletion}) {
      CAPTURE(to_string(k));
      const CampaignRun run = one_fault(k, RecoveryMode::Proposed);
      REQUIRE(run.sim->recoveries().size() == 1);
      const RecoveryRecord& r = run.sim->recoveries()[0];
      REQUIRE(r.reissued_tag.has_value());
      int reissues = 0;
      for (const Transaction& t : run.sim->transactions()) {
        if (!t.reissue_of) continue;
        ++reissues;
        CHECK(t.tag == *r.reissued_tag);
        CHECK(t.tag != run.sim->transactions()[*t.reissue_of].tag);
        CHECK(t.delivered_cycle.has_value());
      }
      CHECK(reissues == 1);
    }
  }

  TEST_CASE("correctable errors never interrupt") {
    for (FaultKind k : {FaultKind::FlipLcrcBit, FaultKind::FlipDllpCrcBit, FaultKind::DropAck, FaultKind::PlSymbolError}) {
      CAPTURE(to_string(k));
      const CampaignRun run = one_fault(k, RecoveryMode::Proposed);
      CHECK(run.sim->events().size() == 1);
      CHECK(run.sim->interrupts().empty());
      CHECK(run.sim->recoveries().empty());
    }
  }

  TEST_CASE("fatal errors keep the link up only in the proposed mode") {
    for (FaultKind k : {FaultKind::FlipSeqNum, FaultKind::MalformHeader, FaultKind::ViolateCredit,
                        FaultKind::SuppressReplayAck, FaultKind::BreakTraining}) {
      CAPTURE(to_string(k));
      const CampaignRun p = one_fault(k, RecoveryMode::Proposed);
      CHECK(p.sim->link_down_cycles() == 0);
      for (const TraceRecord& t : p.sim->trace())
        if (t.cycle > 3000) REQUIRE(t.ltssm == Ltssm::L0);
      const CampaignRun b = one_fault(k, RecoveryMode::Baseline);
      CHECK(b.sim->link_down_cycles() == 40);
      CHECK(b.report.corrupted_bytes_delivered == 0);
    }
  }
}
