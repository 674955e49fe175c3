#pragma once

// Little-endian primitives shared by the EMB1 / SCR1 / SVM1 / FRM1 formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vlogloc::io {

class ByteWriter {
 public:
  void bytes(std::string_view raw);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);

  const std::string& data() const noexcept { return buf_; }

 private:
  std::string buf_;
};

// Bounds-checked reader; every overrun throws Error(TruncatedFile).
class ByteReader {
 public:
  explicit ByteReader(std::string data) : buf_(std::move(data)) {}

  std::string bytes(std::size_t n);
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  double f64();

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::string buf_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

// Reads a text file as lines, dropping a trailing '\r' on each.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace vlogloc::io
