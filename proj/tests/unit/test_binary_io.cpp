#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "json.hpp"
#include "test_util.hpp"
#include "vsdoa/binary_io.hpp"
#include "vsdoa/errors.hpp"

using namespace vsdoa;
using namespace vsdoa::io;

namespace {

std::vector<std::uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> sample_container() {
  Container c;
  c.version = 3;
  c.payload = {1, 2, 3, 4, 5};
  c.header = nlohmann::json{{"payload_bytes", c.payload.size()}, {"note", "x"}}.dump();
  return encode_container("TEST", c);
}

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64(as_bytes("a")), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64(as_bytes("foobar")), 0x85944171f73967e8ull);
}

TEST(ByteIo, LittleEndianRoundTrip) {
  ByteWriter w;
  w.u32(0x01020304u);
  w.u64(0x1122334455667788ull);
  w.f32(1.5f);
  w.f64(-2.25);
  w.str("ab");
  const auto& b = w.buffer();
  EXPECT_EQ(b[0], 0x04);
  EXPECT_EQ(b[3], 0x01);
  EXPECT_EQ(b[4], 0x88);
  ByteReader r(b);
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.u64(), 0x1122334455667788ull);
  EXPECT_EQ(r.f32(), 1.5f);
  EXPECT_EQ(r.f64(), -2.25);
  EXPECT_EQ(r.str(2), "ab");
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_THROW(r.u32(), TruncatedFileError);
}

TEST(Container, RoundTrip) {
  const auto bytes = sample_container();
  const Container c = decode_container(bytes, "TEST", 3, "test");
  EXPECT_EQ(c.version, 3u);
  EXPECT_EQ(c.payload, (std::vector<std::uint8_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(nlohmann::json::parse(c.header)["note"], "x");
}

TEST(Container, DistinctFailures) {
  auto bytes = sample_container();
  {
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_container(bad, "TEST", 3, "t"), FormatError);
    try {
      decode_container(bad, "TEST", 3, "t");
    } catch (const VersionMismatchError&) {
      FAIL() << "bad magic reported as version mismatch";
    } catch (const FormatError&) {
    }
  }
  EXPECT_THROW(decode_container(bytes, "TEST", 4, "t"), VersionMismatchError);
  {
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    EXPECT_THROW(decode_container(cut, "TEST", 3, "t"), TruncatedFileError);
    cut.resize(10);
    EXPECT_THROW(decode_container(cut, "TEST", 3, "t"), TruncatedFileError);
  }
  {
    auto flipped = bytes;
    flipped[flipped.size() - 10] ^= 0x40;  // inside the payload
    EXPECT_THROW(decode_container(flipped, "TEST", 3, "t"), ChecksumError);
  }
  {
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_THROW(decode_container(longer, "TEST", 3, "t"), FormatError);
  }
}

TEST(Files, AtomicWriteAndRead) {
  TempDir dir;
  const auto p = dir / "f.bin";
  const std::vector<std::uint8_t> data{9, 8, 7};
  write_file_atomic(p, data);
  EXPECT_EQ(read_file(p), data);
  EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
  write_text_atomic(p, "hello");
  EXPECT_EQ(read_file(p), as_bytes("hello"));
  EXPECT_THROW(read_file(dir / "missing.bin"), IoError);
  write_file_atomic(dir / "new/sub/x.bin", data);  // parents are created
  EXPECT_EQ(read_file(dir / "new/sub/x.bin"), data);
  EXPECT_THROW(write_file_atomic(p / "x.bin", data), IoError);  // parent is a file
}
