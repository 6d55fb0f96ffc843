// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/recovery.hpp"

#include <algorithm>

namespace pcie_sim {

const char* to_string(RecoveryMode mode) { return mode == RecoveryMode::Proposed ? "proposed" : "baseline"; }

std::optional<Mismatch> compare_and_flag(ByteView golden_stream, const Snapshot& snapshot) {
  const auto& image = snapshot.delivered_image;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::uint64_t pos = snapshot.golden_cursor + i;
    if (pos >= golden_stream.size()) return Mismatch{pos, 0, image[i]};
    if (golden_stream[pos] != image[i]) return Mismatch{pos, golden_stream[pos], image[i]};
  }
  return std::nullopt;
}

RecoveryRecord recover(const Snapshot& snapshot, const InterruptEvent& interrupt, ByteView golden_stream,
                       ByteRange range, Bytes& delivered_image) {
  if (snapshot.cycle < interrupt.event.cycle) throw SnapshotStale("snapshot predates corruption onset");
  if (range.offset + range.length > golden_stream.size())
    throw std::out_of_range("recovery range beyond golden stream");

  if (delivered_image.size() < range.offset + range.length) delivered_image.resize(range.offset + range.length);
  const auto first = golden_stream.begin() + static_cast<std::ptrdiff_t>(range.offset);
  std::copy(first, first + static_cast<std::ptrdiff_t>(range.length),
            delivered_image.begin() + static_cast<std::ptrdiff_t>(range.offset));

  RecoveryRecord rec;
  rec.fault_id = interrupt.event.attributed_fault;
  rec.kind = interrupt.event.kind;
  rec.raised_cycle = interrupt.raised_cycle;
  rec.accepted_cycle = interrupt.accepted_cycle;
  rec.corrected_cycle = interrupt.accepted_cycle + 1;
  rec.latency_cycles = static_cast<std::uint32_t>(rec.corrected_cycle - rec.accepted_cycle);
  rec.bytes_corrected = range.length;
  return rec;
}

Disposition handle_fatal(const ErrorEvent& event, RecoveryMode mode, const LinkState& link,
                         std::uint64_t retrain_cost) {
  if (event.severity() != Severity::FatalUncorrectable)
    throw std::invalid_argument("handle_fatal requires a fatal-severity event");
  if (mode == RecoveryMode::Proposed) return {0, true, link};
  return {retrain_cost, true, ltssm_step(link, LtssmEvent::FatalSeen).next};
}

}  // namespace pcie_sim
