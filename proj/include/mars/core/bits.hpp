#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace mars {

/// Fixed-length bit string. Candidate solutions, hidden targets and hint
/// channels are all BitVectors.
///
/// Hex form packs bits most-significant-first into nibbles; the final nibble
/// is zero padded when size() is not a multiple of four. The length is not
/// encoded, so from_hex needs it.
class BitVector {
public:
    BitVector() = default;
    explicit BitVector(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}
    BitVector(std::initializer_list<int> bits);

    [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }
    [[nodiscard]] bool empty() const noexcept { return bits_.empty(); }

    [[nodiscard]] bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
    [[nodiscard]] bool at(std::size_t i) const;
    void set(std::size_t i, bool value) noexcept { bits_[i] = value ? 1 : 0; }
    void flip(std::size_t i) noexcept { bits_[i] ^= 1; }

    [[nodiscard]] std::size_t count() const noexcept;
    [[nodiscard]] std::size_t hamming(const BitVector& other) const;
    [[nodiscard]] BitVector complement() const;

    [[nodiscard]] std::string to_hex() const;
    [[nodiscard]] static BitVector from_hex(std::string_view hex, std::size_t n);
    [[nodiscard]] std::string to_string() const;

    friend bool operator==(const BitVector&, const BitVector&) = default;
    friend auto operator<=>(const BitVector&, const BitVector&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

}  // namespace mars
