// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/trace.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace pcie_sim {

std::string format_trace_line(const TraceRecord& r) {
  std::string s = "cycle=" + std::to_string(r.cycle);
  s += " tx=";
  s += r.tx_data ? to_hex(*r.tx_data) : "-";
  s += " rx=";
  s += r.rx_data ? to_hex(*r.rx_data) : "-";
  s += r.err_flag() ? " err=1 kind=" : " err=0 kind=";
  if (r.err_kinds.empty()) {
    s += "-";
  } else {
    for (std::size_t i = 0; i < r.err_kinds.size(); ++i) {
      if (i) s += ",";
      s += to_string(r.err_kinds[i]);
    }
  }
  s += r.pr_recovery ? " pr=1" : " pr=0";
  s += " ltssm=";
  s += to_string(r.ltssm);
  return s;
}

void emit_trace(const std::vector<TraceRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << format_trace_line(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("trace destination write failed");
}

std::optional<ParsedTraceLine> parse_trace_line(const std::string& line) {
  if (line.rfind("cycle=", 0) != 0) return std::nullopt;
  ParsedTraceLine p;
  p.line = line;
  const char* begin = line.data() + 6;
  const char* end = line.data() + line.size();
  auto [ptr, ec] = std::from_chars(begin, end, p.cycle);
  if (ec != std::errc{} || ptr == begin) return std::nullopt;

  const auto pos = line.find(" kind=");
  if (pos == std::string::npos) return std::nullopt;
  const auto stop = line.find(' ', pos + 6);
  const std::string kinds = line.substr(pos + 6, stop == std::string::npos ? std::string::npos : stop - pos - 6);
  if (kinds != "-") {
    std::stringstream ss(kinds);
    std::string k;
    while (std::getline(ss, k, ',')) p.kinds.push_back(k);
  }
  return p;
}

}  // namespace pcie_sim
