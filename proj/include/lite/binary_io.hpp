#pragma once
// Little-endian encode/decode helpers for the on-disk formats. Byte order is
// fixed explicitly so files are portable regardless of host endianness.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lite/error.hpp"

namespace lite::bin {

class Writer {
public:
    void bytes(std::string_view s) { buf_.append(s); }

    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f64s(std::span<const double> vs) {
        for (double v : vs) f64(v);
    }

    const std::string& buffer() const noexcept { return buf_; }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::span<const char> data, std::string what = "file")
        : data_(data), what_(std::move(what)) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        std::string_view out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    void f64s(std::span<double> out) {
        need(out.size() * 8);
        for (double& v : out) v = f64();
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    void seek(std::size_t pos) {
        if (pos > data_.size()) throw FormatError(what_ + ": seek past end");
        pos_ = pos;
    }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw FormatError(what_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", " + std::to_string(data_.size() - pos_) +
                              " left)");
        }
    }

    std::span<const char> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace lite::bin
