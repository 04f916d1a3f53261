#include "mars/core/bits.hpp"

#include <algorithm>
#include <numeric>

#include "mars/core/errors.hpp"

namespace mars {

BitVector::BitVector(std::initializer_list<int> bits) {
    bits_.reserve(bits.size());
    for (int b : bits) bits_.push_back(b ? 1 : 0);
}

bool BitVector::at(std::size_t i) const {
    if (i >= bits_.size()) throw ShapeError("bit index " + std::to_string(i) + " out of range");
    return bits_[i] != 0;
}

std::size_t BitVector::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t BitVector::hamming(const BitVector& other) const {
    if (other.size() != size()) throw ShapeError("hamming distance on vectors of different length");
    std::size_t d = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) d += bits_[i] != other.bits_[i];
    return d;
}

BitVector BitVector::complement() const {
    BitVector out = *this;
    for (auto& b : out.bits_) b ^= 1;
    return out;
}

std::string BitVector::to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve((bits_.size() + 3) / 4);
    for (std::size_t i = 0; i < bits_.size(); i += 4) {
        unsigned nibble = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            nibble <<= 1;
            if (i + k < bits_.size()) nibble |= bits_[i + k];
        }
        out.push_back(kDigits[nibble]);
    }
    return out;
}

BitVector BitVector::from_hex(std::string_view hex, std::size_t n) {
    if (hex.size() != (n + 3) / 4)
        throw FormatError("hex string of length " + std::to_string(hex.size()) + " cannot hold " +
                          std::to_string(n) + " bits");
    BitVector out(n);
    for (std::size_t j = 0; j < hex.size(); ++j) {
        const char c = hex[j];
        unsigned nibble;
        if (c >= '0' && c <= '9') nibble = static_cast<unsigned>(c - '0');
        else if (c >= 'a' && c <= 'f') nibble = static_cast<unsigned>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') nibble = static_cast<unsigned>(c - 'A' + 10);
        else throw FormatError(std::string("bad hex digit '") + c + "'");
        for (std::size_t k = 0; k < 4; ++k) {
            const std::size_t i = 4 * j + k;
            const bool bit = (nibble >> (3 - k)) & 1U;
            if (i < n) out.set(i, bit);
            else if (bit) throw FormatError("non-zero padding bits in hex string");
        }
    }
    return out;
}

std::string BitVector::to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) s[i] = '1';
    return s;
}

}  // namespace mars
