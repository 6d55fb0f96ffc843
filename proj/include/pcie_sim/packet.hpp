// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcie_sim {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::size_t kTlpHeaderBytes = 14;
inline constexpr std::uint32_t kMaxLengthDw = 256;
inline constexpr std::uint16_t kSeqModulus = 4096;

enum class TlpKind : std::uint8_t { MemWr = 0x01, MemRd = 0x02, Cpl = 0x03, CplD = 0x04, Msg = 0x05 };

const char* to_string(TlpKind kind);

/// True for the kinds that carry 4 * length_dw payload bytes.
constexpr bool carries_payload(TlpKind kind) { return kind == TlpKind::MemWr || kind == TlpKind::CplD; }

struct Tlp {
  TlpKind kind = TlpKind::MemRd;
  std::uint16_t requester_id = 0;
  std::uint8_t tag = 0;
  std::uint64_t address = 0;
  std::uint16_t length_dw = 0;
  Bytes payload;
  bool ecrc_present = false;
  std::uint32_t ecrc = 0;  // only meaningful when ecrc_present

  /// Checks the structural invariants (payload size, alignment, length bound).
  bool well_formed() const;

  friend bool operator==(const Tlp& a, const Tlp& b);
};

/// Thrown by parse_tlp for any byte sequence that is not a consistent TLP.
class MalformedTlp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wire layout (big-endian): kind(1) requester_id(2) tag(1) address(8)
// length_dw(2) payload(4*length_dw for MemWr/CplD) [ecrc(4)].
Bytes serialize_tlp(const Tlp& tlp);
Tlp parse_tlp(ByteView bytes);

/// ECRC value for a TLP: crc32 over its serialization without the ECRC field.
std::uint32_t compute_ecrc(const Tlp& tlp);
/// Returns a copy with ecrc_present set and the ECRC field filled in.
Tlp with_ecrc(Tlp tlp);
/// Recomputes the ECRC of already-parsed TLP and compares to the stored field.
bool ecrc_ok(const Tlp& tlp);

// CRC-32: poly 0x04C11DB7, init 0xFFFFFFFF, reflected in/out, xorout 0xFFFFFFFF.
std::uint32_t crc32(ByteView data);
// CRC-16: poly 0x100B, init 0xFFFF, no reflection, xorout 0xFFFF.
std::uint16_t crc16(ByteView data);

struct DlFrame {
  std::uint16_t seq_num = 0;  // 12 bits
  Bytes tlp_bytes;
  std::uint32_t lcrc = 0;

  friend bool operator==(const DlFrame&, const DlFrame&) = default;
};

std::uint32_t compute_lcrc(std::uint16_t seq_num, ByteView tlp_bytes);
DlFrame frame_tlp(std::uint16_t seq_num, const Tlp& tlp);
DlFrame frame_bytes(std::uint16_t seq_num, Bytes tlp_bytes);
bool lcrc_ok(const DlFrame& frame);
/// seq(2) || tlp_bytes || lcrc(4), the bytes as they appear on the wire.
Bytes serialize_frame(const DlFrame& frame);

enum class DllpKind : std::uint8_t { Ack = 0x00, Nak = 0x10, FcUpdate = 0x80 };

const char* to_string(DllpKind kind);

struct Dllp {
  DllpKind kind = DllpKind::Ack;
  std::uint16_t seq_num = 0;        // Ack/Nak
  std::uint8_t hdr_credits = 0;     // FcUpdate
  std::uint16_t data_credits_dw = 0;  // FcUpdate
  std::uint16_t crc16 = 0;

  friend bool operator==(const Dllp&, const Dllp&) = default;
};

// Body layout: type(1) then Ack/Nak: 0x00 seq(2, 12 significant bits);
// FcUpdate: hdr(1) data(2). All big-endian.
Bytes serialize_dllp_body(const Dllp& dllp);
Dllp make_ack(std::uint16_t seq_num);
Dllp make_nak(std::uint16_t seq_num);
Dllp make_fc_update(std::uint8_t hdr_credits, std::uint16_t data_credits_dw);
bool dllp_crc_ok(const Dllp& dllp);

/// Modular sequence comparison inside the half-window: a precedes-or-equals b.
constexpr bool seq_le(std::uint16_t a, std::uint16_t b) {
  return static_cast<std::uint16_t>((b - a) & (kSeqModulus - 1)) < kSeqModulus / 2;
}
constexpr std::uint16_t seq_next(std::uint16_t s, std::uint16_t by = 1) {
  return static_cast<std::uint16_t>((s + by) & (kSeqModulus - 1));
}

std::string to_hex(ByteView bytes);

}  // namespace pcie_sim
