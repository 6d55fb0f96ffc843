// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace pcie_sim {

enum class FaultKind : std::uint8_t {
  FlipTlpPayloadBit,
  FlipLcrcBit,
  FlipSeqNum,
  FlipDllpCrcBit,
  DropAck,
  StallCompletion,
  ViolateCredit,
  MalformHeader,
  InjectUnexpectedCompletion,
  SendUnsupportedRequest,
  ForceCompleterAbort,
  FlipEcrcBit,
  PlSymbolError,
  BreakTraining,
  SuppressReplayAck,
};

inline constexpr std::size_t kFaultKindCount = 15;

const char* to_string(FaultKind kind);
std::optional<FaultKind> fault_kind_from_string(std::string_view name);

constexpr std::array<FaultKind, kFaultKindCount> all_fault_kinds() {
  std::array<FaultKind, kFaultKindCount> out{};
  for (std::size_t i = 0; i < kFaultKindCount; ++i) out[i] = static_cast<FaultKind>(i);
  return out;
}

}  // namespace pcie_sim
