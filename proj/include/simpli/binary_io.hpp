#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace simpli {

/// Malformed, truncated or mismatched binary file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian encoder.
class ByteWriter {
public:
    template <typename U>
        requires std::is_arithmetic_v<U>
    void put(U value) {
        using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                     std::conditional_t<sizeof(U) == 2, std::uint16_t, std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
        const auto bits = std::bit_cast<Bits>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }

    void put_bytes(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
    void put_string(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Little-endian decoder over a borrowed buffer; throws FormatError on
/// reads past the end.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes, std::string what = "file") : bytes_(bytes), what_(std::move(what)) {}

    template <typename U>
        requires std::is_arithmetic_v<U>
    U get() {
        using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                     std::conditional_t<sizeof(U) == 2, std::uint16_t, std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
        need(sizeof(U));
        Bits bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<Bits>(Bits(bytes_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return std::bit_cast<U>(bits);
    }

    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::string get_string(std::size_t n) {
        auto s = get_bytes(n);
        return {s.begin(), s.end()};
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_end() const {
        if (remaining() != 0) throw FormatError(what_ + ": " + std::to_string(remaining()) + " unexpected trailing bytes");
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n)
            throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + ", have " +
                              std::to_string(remaining()) + ")");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temporary and renames, so readers never observe a
/// partially written file.
inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace simpli
