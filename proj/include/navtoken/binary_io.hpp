#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

// Little-endian encoding helpers shared by the on-disk formats. Values are
// assembled byte by byte so the files are identical on any host.
namespace navtoken::binary {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_f32s(std::vector<std::uint8_t>& out, std::span<const float> values) {
  for (float v : values) put_f32(out, v);
}

inline void put_bytes(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> bytes) {
  out.insert(out.end(), bytes.begin(), bytes.end());
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

// Sequential reader over a byte buffer; `ok()` turns false on overrun.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  bool ok() const noexcept { return ok_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  std::uint32_t u32() {
    if (!take(4)) return 0;
    return get_u32(data_.data() + pos_ - 4);
  }

  std::uint16_t u16() {
    if (!take(2)) return 0;
    return get_u16(data_.data() + pos_ - 2);
  }

  void f32s(std::vector<float>& out, std::size_t count) {
    out.resize(count);
    if (!take(4 * count)) return;
    const std::uint8_t* p = data_.data() + pos_ - 4 * count;
    for (std::size_t i = 0; i < count; ++i) out[i] = get_f32(p + 4 * i);
  }

  std::string str(std::size_t len) {
    if (!take(len)) return {};
    return std::string(reinterpret_cast<const char*>(data_.data() + pos_ - len), len);
  }

 private:
  bool take(std::size_t n) {
    if (!ok_ || n > remaining()) {
      ok_ = false;
      return false;
    }
    pos_ += n;
    return true;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

}  // namespace navtoken::binary
