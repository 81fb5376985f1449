#include "leakprobe/bitvec.hpp"

#include "leakprobe/errors.hpp"

namespace leakprobe {

BitVec::BitVec(uint32_t width, uint64_t bits) : width_(width), bits_(bits & width_mask(width)) {
    if (width == 0 || width > kMaxWidth)
        throw TypeError("bit-vector width must be in [1, 64], got " + std::to_string(width));
}

BitVec BitVec::parse(std::string_view literal, uint32_t expected_width) {
    if (literal.size() < 3 || literal.substr(0, 2) != "0b")
        throw MalformedDocument("bit-vector literal must start with 0b: '" + std::string(literal) + "'");
    std::string_view digits = literal.substr(2);
    if (expected_width != 0 && digits.size() != expected_width)
        throw MalformedDocument("bit-vector literal '" + std::string(literal) + "' must have " +
                                std::to_string(expected_width) + " digits");
    if (digits.size() > kMaxWidth)
        throw MalformedDocument("bit-vector literal wider than 64 bits");
    uint64_t v = 0;
    for (char c : digits) {
        if (c != '0' && c != '1')
            throw MalformedDocument("invalid digit in bit-vector literal '" + std::string(literal) + "'");
        v = (v << 1) | static_cast<uint64_t>(c - '0');
    }
    return BitVec(static_cast<uint32_t>(digits.size()), v);
}

int64_t BitVec::as_signed() const {
    if (width_ == 64) return static_cast<int64_t>(bits_);
    if (msb()) return static_cast<int64_t>(bits_ | ~width_mask(width_));
    return static_cast<int64_t>(bits_);
}

std::string BitVec::to_string() const {
    std::string s = "0b";
    s.reserve(2 + width_);
    for (uint32_t i = width_; i-- > 0;) s.push_back(bit(i) ? '1' : '0');
    return s;
}

} // namespace leakprobe
