#ifndef VSDOA_BINARY_IO_HPP
#define VSDOA_BINARY_IO_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vsdoa::io {

// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

inline constexpr std::string_view kChecksumAlgorithm = "fnv1a64";

// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(std::string_view s);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Little-endian byte source. Reading past the end throws TruncatedFileError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::span<const std::uint8_t> bytes(std::size_t n);
  std::string str(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// Writes through a sibling temporary file and renames it into place, so a
// reader never observes a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Framed container shared by dataset and model files:
//   magic[4] | u32 version | u32 header_len | header JSON | payload | u64 checksum
// where the checksum covers every preceding byte. The header JSON must carry
// "payload_bytes" so truncation is told apart from corruption.
struct Container {
  std::uint32_t version = 0;
  std::string header;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_container(std::string_view magic, const Container& c);

// Validates magic, version, length and checksum in that order and throws the
// matching FormatError subclass on failure.
Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic,
                           std::uint32_t expected_version, const std::string& what);

}  // namespace vsdoa::io

#endif  // VSDOA_BINARY_IO_HPP
