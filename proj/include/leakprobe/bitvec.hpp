#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace leakprobe {

inline constexpr uint32_t kMaxWidth = 64;

constexpr uint64_t width_mask(uint32_t width) {
    return width >= 64 ? ~uint64_t{0} : ((uint64_t{1} << width) - 1);
}

// Fixed-width two-state bit-vector, up to 64 bits. Bits above `width` are
// always zero.
class BitVec {
  public:
    BitVec() = default;
    BitVec(uint32_t width, uint64_t bits);

    static BitVec zeros(uint32_t width) { return BitVec(width, 0); }
    static BitVec ones(uint32_t width) { return BitVec(width, width_mask(width)); }

    // "0b" followed by exactly `width` binary digits, MSB first. When
    // `expected_width` is non-zero the digit count must match it.
    static BitVec parse(std::string_view literal, uint32_t expected_width = 0);

    uint32_t width() const { return width_; }
    uint64_t bits() const { return bits_; }
    bool bit(uint32_t i) const { return (bits_ >> i) & 1u; }
    bool msb() const { return width_ != 0 && bit(width_ - 1); }
    int64_t as_signed() const;

    std::string to_string() const;

    friend bool operator==(const BitVec&, const BitVec&) = default;

  private:
    uint32_t width_ = 0;
    uint64_t bits_ = 0;
};

} // namespace leakprobe
