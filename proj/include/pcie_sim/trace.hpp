// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pcie_sim/errors.hpp"
#include "pcie_sim/link.hpp"
#include "pcie_sim/packet.hpp"

namespace pcie_sim {

/// One cycle of captured signals on the requester-to-completer direction.
struct TraceRecord {
  std::uint64_t cycle = 0;
  std::optional<Bytes> tx_data;  // frame entering TX PL
  std::optional<Bytes> rx_data;  // frame leaving RX PL
  std::vector<ErrorKind> err_kinds;
  bool pr_recovery = false;
  Ltssm ltssm = Ltssm::Detect;

  bool err_flag() const { return !err_kinds.empty(); }
};

/// `cycle=<n> tx=<hex|-> rx=<hex|-> err=<0|1> kind=<names|-> pr=<0|1> ltssm=<state>`.
/// Several errors in one cycle are listed comma-separated in detection order.
std::string format_trace_line(const TraceRecord& record);

/// Writes one line per record. Throws std::runtime_error if the stream fails.
void emit_trace(const std::vector<TraceRecord>& records, std::ostream& out);

struct ParsedTraceLine {
  std::uint64_t cycle = 0;
  std::string line;
  std::vector<std::string> kinds;
};

/// Parses a line produced by format_trace_line; nullopt if it does not match.
std::optional<ParsedTraceLine> parse_trace_line(const std::string& line);

}  // namespace pcie_sim
