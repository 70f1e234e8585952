#pragma once

#include "lsa/error.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsa {

/// Little-endian encoder into an in-memory buffer.
class ByteWriter {
public:
    void bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }

    template <typename UInt>
    void uint(UInt v)
    {
        for (std::size_t i = 0; i < sizeof(UInt); ++i)
            buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }

    void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
    void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

    const std::vector<char>& buffer() const noexcept { return buf_; }

private:
    std::vector<char> buf_;
};

/// Little-endian decoder; running past the end throws TruncatedFile carrying
/// the offset at which the read started.
class ByteReader {
public:
    explicit ByteReader(std::span<const char> data) : data_(data) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    std::string bytes(std::size_t n)
    {
        need(n);
        std::string out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    template <typename UInt>
    UInt uint()
    {
        need(sizeof(UInt));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(UInt);
        return static_cast<UInt>(v);
    }

    std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
    float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

private:
    void need(std::size_t n) const
    {
        if (remaining() < n)
            throw Error(ErrorCode::TruncatedFile,
                        "needed " + std::to_string(n) + " bytes, " + std::to_string(remaining()) +
                            " left",
                        pos_);
    }

    std::span<const char> data_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);

/// Writes via a sibling temporary and renames, so a failed write never
/// leaves a partial file at path.
void write_file_bytes(const std::filesystem::path& path, std::span<const char> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

} // namespace lsa
