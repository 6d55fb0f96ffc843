// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "pcie_sim/fault_kind.hpp"

namespace pcie_sim {

enum class ErrorKind : std::uint8_t {
  RxError,
  BadTlp,
  BadDllp,
  ReplayTimeout,
  CorruptedRxTlp,
  EcrcFailure,
  UnsupportedRequest,
  CompletionTimeout,
  CompleterAbort,
  UnexpectedCompletion,
  TrainingError,
  DllProtocolError,
  ReceiverOverflow,
  FlowControlProtocolError,
  MalformedTlp,
};

inline constexpr std::size_t kErrorKindCount = 15;

enum class Layer : std::uint8_t { TL, DL, PL };
enum class Severity : std::uint8_t { Correctable, NonFatalUncorrectable, FatalUncorrectable };

struct Classification {
  Layer layer;
  Severity severity;
  friend bool operator==(const Classification&, const Classification&) = default;
};

/// The error taxonomy: every kind maps to exactly one (layer, severity) row.
Classification classify(ErrorKind kind);

const char* to_string(ErrorKind kind);
const char* to_string(Layer layer);
const char* to_string(Severity severity);
std::optional<ErrorKind> error_kind_from_string(std::string_view name);

constexpr std::size_t index_of(ErrorKind k) { return static_cast<std::size_t>(k); }
constexpr std::array<ErrorKind, kErrorKindCount> all_error_kinds() {
  std::array<ErrorKind, kErrorKindCount> out{};
  for (std::size_t i = 0; i < kErrorKindCount; ++i) out[i] = static_cast<ErrorKind>(i);
  return out;
}

struct ErrorEvent {
  ErrorKind kind = ErrorKind::RxError;
  std::uint64_t cycle = 0;
  std::uint32_t seq_or_tag = 0;
  std::optional<std::uint32_t> attributed_fault;
  std::string detail;

  // Layer and severity are derived, never stored.
  Layer layer() const { return classify(kind).layer; }
  Severity severity() const { return classify(kind).severity; }
};

// Flat AER model: one status bit per kind (bit index == kind index), split by
// severity into the correctable and uncorrectable masks.
struct AerRegisters {
  std::uint16_t correctable_status = 0;
  std::uint16_t uncorrectable_status = 0;
  std::optional<ErrorKind> first_error_kind;
  std::array<std::uint64_t, kErrorKindCount> counts{};

  std::uint64_t total() const;
  friend bool operator==(const AerRegisters&, const AerRegisters&) = default;
};

AerRegisters aer_record(AerRegisters registers, const ErrorEvent& event);

/// The error kind an injected fault of the given kind is expected to surface as.
ErrorKind expected_error_for(FaultKind fault);

}  // namespace pcie_sim
