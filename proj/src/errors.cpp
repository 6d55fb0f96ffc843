// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/errors.hpp"

#include <numeric>

namespace pcie_sim {

Classification classify(ErrorKind kind) {
  using L = Layer;
  using S = Severity;
  switch (kind) {
    case ErrorKind::RxError: return {L::PL, S::Correctable};
    case ErrorKind::BadTlp: return {L::DL, S::Correctable};
    case ErrorKind::BadDllp: return {L::DL, S::Correctable};
    case ErrorKind::ReplayTimeout: return {L::DL, S::Correctable};
    case ErrorKind::CorruptedRxTlp: return {L::TL, S::NonFatalUncorrectable};
    case ErrorKind::EcrcFailure: return {L::TL, S::NonFatalUncorrectable};
    case ErrorKind::UnsupportedRequest: return {L::TL, S::NonFatalUncorrectable};
    case ErrorKind::CompletionTimeout: return {L::TL, S::NonFatalUncorrectable};
    case ErrorKind::CompleterAbort: return {L::TL, S::NonFatalUncorrectable};
    case ErrorKind::UnexpectedCompletion: return {L::TL, S::NonFatalUncorrectable};
    case ErrorKind::TrainingError: return {L::PL, S::FatalUncorrectable};
    case ErrorKind::DllProtocolError: return {L::DL, S::FatalUncorrectable};
    case ErrorKind::ReceiverOverflow: return {L::TL, S::FatalUncorrectable};
    case ErrorKind::FlowControlProtocolError: return {L::TL, S::FatalUncorrectable};
    case ErrorKind::MalformedTlp: return {L::TL, S::FatalUncorrectable};
  }
  return {L::TL, S::FatalUncorrectable};
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RxError: return "RxError";
    case ErrorKind::BadTlp: return "BadTlp";
    case ErrorKind::BadDllp: return "BadDllp";
    case ErrorKind::ReplayTimeout: return "ReplayTimeout";
    case ErrorKind::CorruptedRxTlp: return "CorruptedRxTlp";
    case ErrorKind::EcrcFailure: return "EcrcFailure";
    case ErrorKind::UnsupportedRequest: return "UnsupportedRequest";
    case ErrorKind::CompletionTimeout: return "CompletionTimeout";
    case ErrorKind::CompleterAbort: return "CompleterAbort";
    case ErrorKind::UnexpectedCompletion: return "UnexpectedCompletion";
    case ErrorKind::TrainingError: return "TrainingError";
    case ErrorKind::DllProtocolError: return "DllProtocolError";
    case ErrorKind::ReceiverOverflow: return "ReceiverOverflow";
    case ErrorKind::FlowControlProtocolError: return "FlowControlProtocolError";
    case ErrorKind::MalformedTlp: return "MalformedTlp";
  }
  return "?";
}

const char* to_string(Layer layer) {
  switch (layer) {
    case Layer::TL: return "TL";
    case Layer::DL: return "DL";
    case Layer::PL: return "PL";
  }
  return "?";
}

const char* to_string(Severity severity) {
  switch (severity) {
    case Severity::Correctable: return "Correctable";
    case Severity::NonFatalUncorrectable: return "NonFatalUncorrectable";
    case Severity::FatalUncorrectable: return "FatalUncorrectable";
  }
  return "?";
}

std::optional<ErrorKind> error_kind_from_string(std::string_view name) {
  for (ErrorKind k : all_error_kinds())
    if (name == to_string(k)) return k;
  return std::nullopt;
}

std::uint64_t AerRegisters::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

AerRegisters aer_record(AerRegisters registers, const ErrorEvent& event) {
  const auto bit = static_cast<std::uint16_t>(1u << index_of(event.kind));
  if (event.severity() == Severity::Correctable)
    registers.correctable_status |= bit;
  else
    registers.uncorrectable_status |= bit;
  ++registers.counts[index_of(event.kind)];
  if (!registers.first_error_kind) registers.first_error_kind = event.kind;
  return registers;
}

ErrorKind expected_error_for(FaultKind fault) {
  switch (fault) {
    case FaultKind::FlipTlpPayloadBit: return ErrorKind::BadTlp;
    case FaultKind::FlipLcrcBit: return ErrorKind::BadTlp;
    case FaultKind::FlipSeqNum: return ErrorKind::DllProtocolError;
    case FaultKind::FlipDllpCrcBit: return ErrorKind::BadDllp;
    case FaultKind::DropAck: return ErrorKind::ReplayTimeout;
    case FaultKind::StallCompletion: return ErrorKind::CompletionTimeout;
    case FaultKind::ViolateCredit: return ErrorKind::ReceiverOverflow;
    case FaultKind::MalformHeader: return ErrorKind::MalformedTlp;
    case FaultKind::InjectUnexpectedCompletion: return ErrorKind::UnexpectedCompletion;
    case FaultKind::SendUnsupportedRequest: return ErrorKind::UnsupportedRequest;
    case FaultKind::ForceCompleterAbort: return ErrorKind::CompleterAbort;
    case FaultKind::FlipEcrcBit: return ErrorKind::EcrcFailure;
    case FaultKind::PlSymbolError: return ErrorKind::RxError;
    case FaultKind::BreakTraining: return ErrorKind::TrainingError;
    case FaultKind::SuppressReplayAck: return ErrorKind::FlowControlProtocolError;
  }
  return ErrorKind::MalformedTlp;
}

const char* to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::FlipTlpPayloadBit: return "FlipTlpPayloadBit";
    case FaultKind::FlipLcrcBit: return "FlipLcrcBit";
    case FaultKind::FlipSeqNum: return "FlipSeqNum";
    case FaultKind::FlipDllpCrcBit: return "FlipDllpCrcBit";
    case FaultKind::DropAck: return "DropAck";
    case FaultKind::StallCompletion: return "StallCompletion";
    case FaultKind::ViolateCredit: return "ViolateCredit";
    case FaultKind::MalformHeader: return "MalformHeader";
    case FaultKind::InjectUnexpectedCompletion: return "InjectUnexpectedCompletion";
    case FaultKind::SendUnsupportedRequest: return "SendUnsupportedRequest";
    case FaultKind::ForceCompleterAbort: return "ForceCompleterAbort";
    case FaultKind::FlipEcrcBit: return "FlipEcrcBit";
    case FaultKind::PlSymbolError: return "PlSymbolError";
    case FaultKind::BreakTraining: return "BreakTraining";
    case FaultKind::SuppressReplayAck: return "SuppressReplayAck";
  }
  return "?";
}

std::optional<FaultKind> fault_kind_from_string(std::string_view name) {
  for (FaultKind k : all_fault_kinds())
    if (name == to_string(k)) return k;
  return std::nullopt;
}

}  // namespace pcie_sim
