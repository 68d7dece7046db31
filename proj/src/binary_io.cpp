#include "vsdoa/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vsdoa/errors.hpp"
#include "json.hpp"

namespace vsdoa::io {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ByteWriter::str(std::string_view s) {
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  if (n > remaining()) throw TruncatedFileError("unexpected end of data");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str(std::size_t n) {
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

std::uint32_t ByteReader::u32() {
  auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::uint8_t> encode_container(std::string_view magic, const Container& c) {
  ByteWriter w;
  w.str(magic);
  w.u32(c.version);
  w.u32(static_cast<std::uint32_t>(c.header.size()));
  w.str(c.header);
  w.bytes(c.payload);
  w.u64(fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic,
                           std::uint32_t expected_version, const std::string& what) {
  ByteReader r(bytes);
  if (bytes.size() < magic.size() || r.str(magic.size()) != magic) {
    throw FormatError(what + ": bad magic bytes");
  }
  Container c;
  c.version = r.u32();
  if (c.version != expected_version) {
    throw VersionMismatchError(what + ": format version " + std::to_string(c.version) +
                               " is not supported (expected " + std::to_string(expected_version) + ")");
  }
  const std::uint32_t header_len = r.u32();
  if (header_len > r.remaining()) throw TruncatedFileError(what + ": truncated header");
  c.header = r.str(header_len);

  std::uint64_t payload_len = 0;
  try {
    payload_len = nlohmann::json::parse(c.header).at("payload_bytes").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": unreadable header (" + e.what() + ")");
  }
  if (r.remaining() < payload_len + 8) throw TruncatedFileError(what + ": truncated payload");
  if (r.remaining() > payload_len + 8) throw FormatError(what + ": trailing bytes after checksum");
  auto payload = r.bytes(static_cast<std::size_t>(payload_len));
  c.payload.assign(payload.begin(), payload.end());
  const std::uint64_t stored = r.u64();
  if (stored != fnv1a64(bytes.first(bytes.size() - 8))) {
    throw ChecksumError(what + ": checksum mismatch");
  }
  return c;
}

}  // namespace vsdoa::io
