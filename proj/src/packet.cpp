// SPDX-License-Identifier: Apache-2.0

#include "pcie_sim/packet.hpp"

#include <array>

namespace pcie_sim {

namespace {

void put_be(Bytes& out, std::uint64_t value, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t get_be(ByteView in, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 8) | in[offset + i];
  return v;
}

constexpr std::array<std::uint32_t, 256> make_crc32_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? (c >> 1) ^ 0xEDB88320u : c >> 1;
    table[i] = c;
  }
  return table;
}

constexpr std::array<std::uint16_t, 256> make_crc16_table() {
  std::array<std::uint16_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint16_t c = static_cast<std::uint16_t>(i << 8);
    for (int k = 0; k < 8; ++k)
      c = (c & 0x8000u) ? static_cast<std::uint16_t>((c << 1) ^ 0x100Bu) : static_cast<std::uint16_t>(c << 1);
    table[i] = c;
  }
  return table;
}

constexpr auto kCrc32Table = make_crc32_table();
constexpr auto kCrc16Table = make_crc16_table();

bool valid_kind_code(std::uint8_t code) { return code >= 0x01 && code <= 0x05; }

}  // namespace

const char* to_string(TlpKind kind) {
  switch (kind) {
    case TlpKind::MemWr: return "MemWr";
    case TlpKind::MemRd: return "MemRd";
    case TlpKind::Cpl: return "Cpl";
    case TlpKind::CplD: return "CplD";
    case TlpKind::Msg: return "Msg";
  }
  return "?";
}

const char* to_string(DllpKind kind) {
  switch (kind) {
    case DllpKind::Ack: return "Ack";
    case DllpKind::Nak: return "Nak";
    case DllpKind::FcUpdate: return "FcUpdate";
  }
  return "?";
}

bool Tlp::well_formed() const {
  if (length_dw > kMaxLengthDw) return false;
  if (address % 4 != 0) return false;
  if (carries_payload(kind)) return payload.size() == 4u * length_dw;
  return payload.empty();
}

bool operator==(const Tlp& a, const Tlp& b) {
  if (a.kind != b.kind || a.requester_id != b.requester_id || a.tag != b.tag || a.address != b.address ||
      a.length_dw != b.length_dw || a.payload != b.payload || a.ecrc_present != b.ecrc_present)
    return false;
  return !a.ecrc_present || a.ecrc == b.ecrc;
}

namespace {

Bytes serialize_without_ecrc(const Tlp& tlp) {
  Bytes out;
  out.reserve(kTlpHeaderBytes + tlp.payload.size() + 4);
  out.push_back(static_cast<std::uint8_t>(tlp.kind));
  put_be(out, tlp.requester_id, 2);
  out.push_back(tlp.tag);
  put_be(out, tlp.address, 8);
  put_be(out, tlp.length_dw, 2);
  out.insert(out.end(), tlp.payload.begin(), tlp.payload.end());
  return out;
}

}  // namespace

Bytes serialize_tlp(const Tlp& tlp) {
  Bytes out = serialize_without_ecrc(tlp);
  if (tlp.ecrc_present) put_be(out, tlp.ecrc, 4);
  return out;
}

Tlp parse_tlp(ByteView bytes) {
  if (bytes.size() < kTlpHeaderBytes) throw MalformedTlp("truncated header");
  if (!valid_kind_code(bytes[0])) throw MalformedTlp("unknown kind code");
  Tlp tlp;
  tlp.kind = static_cast<TlpKind>(bytes[0]);
  tlp.requester_id = static_cast<std::uint16_t>(get_be(bytes, 1, 2));
  tlp.tag = bytes[3];
  tlp.address = get_be(bytes, 4, 8);
  tlp.length_dw = static_cast<std::uint16_t>(get_be(bytes, 12, 2));
  if (tlp.length_dw > kMaxLengthDw) throw MalformedTlp("length_dw out of range");
  if (tlp.address % 4 != 0) throw MalformedTlp("unaligned address");

  const std::size_t payload = carries_payload(tlp.kind) ? 4u * tlp.length_dw : 0u;
  const std::size_t bare = kTlpHeaderBytes + payload;
  if (bytes.size() == bare) {
    tlp.ecrc_present = false;
  } else if (bytes.size() == bare + 4) {
    tlp.ecrc_present = true;
    tlp.ecrc = static_cast<std::uint32_t>(get_be(bytes, bare, 4));
  } else {
    throw MalformedTlp("payload length inconsistent with length_dw");
  }
  tlp.payload.assign(bytes.begin() + kTlpHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(bare));
  return tlp;
}

std::uint32_t compute_ecrc(const Tlp& tlp) { return crc32(serialize_without_ecrc(tlp)); }

Tlp with_ecrc(Tlp tlp) {
  tlp.ecrc_present = true;
  tlp.ecrc = compute_ecrc(tlp);
  return tlp;
}

bool ecrc_ok(const Tlp& tlp) { return !tlp.ecrc_present || tlp.ecrc == compute_ecrc(tlp); }

std::uint32_t crc32(ByteView data) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::uint8_t b : data) c = kCrc32Table[(c ^ b) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::uint16_t crc16(ByteView data) {
  std::uint16_t c = 0xFFFFu;
  for (std::uint8_t b : data) c = static_cast<std::uint16_t>((c << 8) ^ kCrc16Table[((c >> 8) ^ b) & 0xFFu]);
  return static_cast<std::uint16_t>(c ^ 0xFFFFu);
}

std::uint32_t compute_lcrc(std::uint16_t seq_num, ByteView tlp_bytes) {
  Bytes buf;
  buf.reserve(tlp_bytes.size() + 2);
  put_be(buf, seq_num, 2);
  buf.insert(buf.end(), tlp_bytes.begin(), tlp_bytes.end());
  return crc32(buf);
}

DlFrame frame_bytes(std::uint16_t seq_num, Bytes tlp_bytes) {
  DlFrame f;
  f.seq_num = static_cast<std::uint16_t>(seq_num & (kSeqModulus - 1));
  f.tlp_bytes = std::move(tlp_bytes);
  f.lcrc = compute_lcrc(f.seq_num, f.tlp_bytes);
  return f;
}

DlFrame frame_tlp(std::uint16_t seq_num, const Tlp& tlp) { return frame_bytes(seq_num, serialize_tlp(tlp)); }

bool lcrc_ok(const DlFrame& frame) { return frame.lcrc == compute_lcrc(frame.seq_num, frame.tlp_bytes); }

Bytes serialize_frame(const DlFrame& frame) {
  Bytes out;
  out.reserve(frame.tlp_bytes.size() + 6);
  put_be(out, frame.seq_num, 2);
  out.insert(out.end(), frame.tlp_bytes.begin(), frame.tlp_bytes.end());
  put_be(out, frame.lcrc, 4);
  return out;
}

Bytes serialize_dllp_body(const Dllp& dllp) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(dllp.kind));
  if (dllp.kind == DllpKind::FcUpdate) {
    out.push_back(dllp.hdr_credits);
    put_be(out, dllp.data_credits_dw, 2);
  } else {
    out.push_back(0);
    put_be(out, dllp.seq_num & (kSeqModulus - 1), 2);
  }
  return out;
}

namespace {
Dllp seal(Dllp d) {
  d.crc16 = crc16(serialize_dllp_body(d));
  return d;
}
}  // namespace

Dllp make_ack(std::uint16_t seq_num) { return seal({DllpKind::Ack, seq_num, 0, 0, 0}); }
Dllp make_nak(std::uint16_t seq_num) { return seal({DllpKind::Nak, seq_num, 0, 0, 0}); }
Dllp make_fc_update(std::uint8_t hdr, std::uint16_t data) { return seal({DllpKind::FcUpdate, 0, hdr, data, 0}); }

bool dllp_crc_ok(const Dllp& dllp) { return dllp.crc16 == crc16(serialize_dllp_body(dllp)); }

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

}  // namespace pcie_sim
