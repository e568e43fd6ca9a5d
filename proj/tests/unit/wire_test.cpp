#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "buddy/wire.hpp"

using namespace buddy;

namespace {

std::vector<unsigned> to_uints(const HeaderBytes& b) {
  std::vector<unsigned> out;
  for (auto x : b) out.push_back(std::to_integer<unsigned>(x));
  return out;
}

HeaderBytes from_uints(std::initializer_list<unsigned> v) {
  HeaderBytes b{};
  std::size_t i = 0;
  for (unsigned x : v) b[i++] = std::byte(x);
  return b;
}

std::string str(std::span<const std::byte> s) {
  return std::string(reinterpret_cast<const char*>(s.data()), s.size());
}

}  // namespace

TEST(Header, EncodeZero) {
  EXPECT_EQ(to_uints(encode_header(0, 0)), (std::vector<unsigned>{0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(Header, EncodeLittleEndian) {
  EXPECT_EQ(to_uints(encode_header(8, 3)), (std::vector<unsigned>{8, 0, 0, 0, 3, 0, 0, 0}));
  EXPECT_EQ(to_uints(encode_header(4096, 17)), (std::vector<unsigned>{0x00, 0x10, 0, 0, 0x11, 0, 0, 0}));
}

TEST(Header, Decode) {
  EXPECT_EQ(decode_header(from_uints({0, 0, 0, 0, 0, 0, 0, 0})), (MessageHeader{0, 0}));
  EXPECT_EQ(decode_header(from_uints({8, 0, 0, 0, 3, 0, 0, 0})), (MessageHeader{8, 3}));
  EXPECT_EQ(decode_header(from_uints({0xFF, 0xFF, 0xFF, 0xFF, 0, 0, 0, 0})), (MessageHeader{4294967295u, 0}));
}

TEST(Header, WrongLengthIsFramingError) {
  std::vector<std::byte> seven(7), nine(9);
  EXPECT_THROW(decode_header(seven), framing_error);
  EXPECT_THROW(decode_header(nine), framing_error);
}

TEST(Header, RoundtripRandomAndBoundary) {
  std::mt19937_64 rng(7);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cases = {
      {0, 0}, {0xFFFFFFFFu, 0xFFFFFFFFu}, {1, 0xFFFFFFFFu}, {0xFFFFFFFFu, 1}, {0x80000000u, 0x7FFFFFFFu}};
  for (int i = 0; i < 10000; ++i) {
    const auto v = rng();
    cases.emplace_back(static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(v >> 32));
  }
  for (auto [s, d] : cases) {
    const auto h = decode_header(encode_header(s, d));
    ASSERT_EQ(h.payload_size, s);
    ASSERT_EQ(h.dst_rank, d);
  }
}

TEST(Bundle, AppendAdvancesTail) {
  Bundle b(4096);
  std::vector<std::byte> payload(8);
  EXPECT_TRUE(b.append(1, payload));
  EXPECT_EQ(b.tail(), 16u);
}

TEST(Bundle, AppendRejectsWhenFull) {
  Bundle b(4096);
  b.set_tail(4090);
  std::vector<std::byte> one(1);
  EXPECT_FALSE(b.append(0, one));
  EXPECT_EQ(b.tail(), 4090u);
}

TEST(Bundle, ExactFit) {
  Bundle b(16);
  std::vector<std::byte> payload(8);
  EXPECT_TRUE(b.append(0, payload));
  EXPECT_EQ(b.tail(), 16u);
  EXPECT_EQ(b.free_space(), 0u);
}

TEST(Bundle, ZeroLengthPayload) {
  Bundle b(64);
  EXPECT_TRUE(b.append(5, {}));
  EXPECT_EQ(b.tail(), 8u);
  auto it = b.records().begin();
  EXPECT_EQ(it->dst, 5u);
  EXPECT_TRUE(it->payload.empty());
}

TEST(Bundle, IterateEmpty) {
  Bundle b(64);
  EXPECT_EQ(b.records().begin(), b.records().end());
}

TEST(Bundle, IterateInOrder) {
  Bundle b(64);
  ASSERT_TRUE(b.append(1, as_bytes("abcd")));
  ASSERT_TRUE(b.append(2, as_bytes("efgh")));
  std::vector<std::pair<Rank, std::string>> got;
  for (const auto& r : b.records()) got.emplace_back(r.dst, str(r.payload));
  EXPECT_EQ(got, (std::vector<std::pair<Rank, std::string>>{{1, "abcd"}, {2, "efgh"}}));
}

TEST(Bundle, PayloadIsZeroCopy) {
  Bundle b(64);
  ASSERT_TRUE(b.append(1, as_bytes("abcd")));
  auto r = *b.records().begin();
  EXPECT_EQ(r.payload.data(), b.data() + 8);
  EXPECT_EQ(r.raw().data(), b.data());
}

TEST(Bundle, OverrunIsCorrupt) {
  Bundle b(64);
  const auto h = encode_header(100, 0);
  std::memcpy(b.data(), h.data(), 8);
  b.set_tail(20);
  EXPECT_THROW(
      {
        for (const auto& r : b.records()) (void)r;
      },
      corrupt_bundle);
  EXPECT_FALSE(validate_records(b.bytes()));
}

TEST(Bundle, TruncatedHeaderIsCorrupt) {
  Bundle b(64);
  ASSERT_TRUE(b.append(1, as_bytes("ab")));
  b.set_tail(b.tail() + 3);
  EXPECT_FALSE(validate_records(b.bytes()));
}

TEST(Bundle, PropertyRoundtripAndDensity) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    Bundle b(1 << 16);
    std::vector<std::pair<Rank, std::vector<std::byte>>> sent;
    std::size_t expect_tail = 0;
    for (;;) {
      std::vector<std::byte> p(rng() % 1025);
      for (auto& x : p) x = std::byte(rng() & 0xFF);
      const Rank dst = static_cast<Rank>(rng() % 1000);
      if (!b.append(dst, p)) break;
      expect_tail += 8 + p.size();
      sent.emplace_back(dst, std::move(p));
    }
    ASSERT_EQ(b.tail(), expect_tail);
    std::size_t i = 0, sum = 0;
    for (const auto& r : b.records()) {
      ASSERT_LT(i, sent.size());
      ASSERT_EQ(r.dst, sent[i].first);
      ASSERT_TRUE(std::equal(r.payload.begin(), r.payload.end(), sent[i].second.begin(), sent[i].second.end()));
      sum += r.wire_size();
      ++i;
    }
    ASSERT_EQ(i, sent.size());
    ASSERT_EQ(sum, b.tail());
    RecordCounts c;
    ASSERT_TRUE(validate_records(b.bytes(), &c));
    ASSERT_EQ(c.app, sent.size());
  }
}

TEST(Bundle, MoveTransfersStorage) {
  Bundle a(32);
  ASSERT_TRUE(a.append(3, as_bytes("x")));
  const std::byte* p = a.data();
  Bundle b(std::move(a));
  EXPECT_EQ(b.data(), p);
  EXPECT_EQ(b.tail(), 9u);
  EXPECT_FALSE(a.valid());
  Bundle c = b.clone();
  EXPECT_NE(c.data(), b.data());
  EXPECT_EQ(str(c.bytes()), str(b.bytes()));
}
