// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <string>

#include "oracles.hpp"
#include "pcie_sim/packet.hpp"

using namespace pcie_sim;

namespace {

Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

Tlp example_read() {
  Tlp t;
  t.kind = TlpKind::MemRd;
  t.requester_id = 0x0100;
  t.tag = 5;
  t.address = 0x1000;
  t.length_dw = 1;
  return t;
}

}  // namespace

TEST_SUITE("packet") {
  TEST_CASE("crc32 check value and empty input") {
    CHECK(crc32(ascii("123456789")) == 0xCBF43926u);
    CHECK(oracle::crc32_bitwise(ascii("123456789")) == 0xCBF43926u);
    CHECK(crc32(Bytes{}) == 0u);
    CHECK(crc32(Bytes{0x00}) == oracle::crc32_bitwise({0x00}));
  }

  TEST_CASE("crc16 against the shift-register model") {
    CHECK(crc16(Bytes{}) == 0u);
    const Bytes ack = serialize_dllp_body(make_ack(1));
    CHECK(crc16(ack) == oracle::crc16_bitwise(ack));
    CHECK(crc16(ack) == crc16(ack));
  }

  TEST_CASE("crc oracles on random inputs") {
    SplitMix64 rng(0xC0FFEE);
    for (int i = 0; i < 2000; ++i) {
      const Bytes b = oracle::random_bytes(rng, rng.below(1501));
      REQUIRE(crc32(b) == oracle::crc32_bitwise(b));
      REQUIRE(crc16(b) == oracle::crc16_bitwise(b));
    }
  }

  TEST_CASE("serialize layout by hand") {
    const Bytes expect{0x02, 0x01, 0x00, 0x05, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x00, 0x01};
    CHECK(serialize_tlp(example_read()) == expect);
    CHECK(parse_tlp(expect) == example_read());

    Tlp w;
    w.kind = TlpKind::MemWr;
    CHECK(serialize_tlp(w).size() == kTlpHeaderBytes);
  }

  TEST_CASE("parse rejects inconsistent layouts") {
    Bytes b = serialize_tlp(example_read());
    b[0] = 0xFF;
    CHECK_THROWS_AS(parse_tlp(b), MalformedTlp);

    Tlp w;
    w.kind = TlpKind::MemWr;
    w.length_dw = 2;
    w.payload = Bytes(8, 0xAB);
    Bytes short_write = serialize_tlp(w);
    short_write.resize(kTlpHeaderBytes + 4);
    CHECK_THROWS_AS(parse_tlp(short_write), MalformedTlp);

    CHECK_THROWS_AS(parse_tlp(Bytes(13, 0x01)), MalformedTlp);
    Bytes unaligned = serialize_tlp(example_read());
    unaligned[11] = 0x02;
    CHECK_THROWS_AS(parse_tlp(unaligned), MalformedTlp);
  }

  TEST_CASE("round trip and serialized length") {
    SplitMix64 rng(7);
    for (int i = 0; i < 2000; ++i) {
      const Tlp t = oracle::random_tlp(rng);
      const Bytes b = serialize_tlp(t);
      REQUIRE(b.size() == kTlpHeaderBytes + t.payload.size() + (t.ecrc_present ? 4u : 0u));
      REQUIRE(parse_tlp(b) == t);
      REQUIRE(ecrc_ok(parse_tlp(b)));
    }
  }

  TEST_CASE("lcrc covers the sequence number") {
    const Tlp t = example_read();
    Bytes covered{0x00, 0x00};
    const Bytes hdr = serialize_tlp(t);
    covered.insert(covered.end(), hdr.begin(), hdr.end());
    CHECK(frame_tlp(0, t).lcrc == oracle::crc32_bitwise(covered));
    CHECK(frame_tlp(7, t).lcrc != frame_tlp(8, t).lcrc);
  }

  TEST_CASE("single-bit flips in seq or payload break the lcrc") {
    SplitMix64 rng(11);
    for (int i = 0; i < 500; ++i) {
      DlFrame f = frame_tlp(static_cast<std::uint16_t>(rng.below(kSeqModulus)), oracle::random_tlp(rng));
      const std::uint64_t bits = 12 + 8 * f.tlp_bytes.size();
      const std::uint64_t bit = rng.below(bits);
      if (bit < 12)
        f.seq_num ^= static_cast<std::uint16_t>(1u << bit);
      else
        f.tlp_bytes[(bit - 12) / 8] ^= static_cast<std::uint8_t>(1u << ((bit - 12) % 8));
      REQUIRE_FALSE(lcrc_ok(f));
    }
  }

  TEST_CASE("dllp crc") {
    Dllp d = make_fc_update(3, 64);
    CHECK(dllp_crc_ok(d));
    CHECK(d.crc16 == oracle::crc16_bitwise(serialize_dllp_body(d)));
    d.crc16 ^= 0x0400;
    CHECK_FALSE(dllp_crc_ok(d));
    CHECK(dllp_crc_ok(make_nak(4095)));
  }

  TEST_CASE("sequence arithmetic wraps at 4096") {
    CHECK(seq_next(4095) == 0);
    CHECK(seq_le(4090, 3));
    CHECK_FALSE(seq_le(3, 4090));
    CHECK(seq_le(17, 17));
  }
}
