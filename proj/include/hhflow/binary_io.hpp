#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "hhflow/tensor.hpp"

namespace hhflow {

class FormatError : public Error {
public:
    using Error::Error;
};

/// Little-endian append-only byte buffer.
class BinaryWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u32(std::uint32_t x) { put(x); }
    void u64(std::uint64_t x) { put(x); }
    void i32(std::int32_t x) { put(static_cast<std::uint32_t>(x)); }
    void f64(double x) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        put(bits);
    }
    /// u32 length followed by the raw bytes.
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    const std::vector<char>& buffer() const { return buf_; }

private:
    template <class U>
    void put(U x) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
    }
    std::vector<char> buf_;
};

/// Bounds-checked reader over a byte buffer; every overrun is a FormatError
/// that names `what`.
class BinaryReader {
public:
    BinaryReader(const std::vector<char>& data, std::string what) : data_(data), what_(std::move(what)) {}

    std::string bytes(std::size_t n) {
        need(n);
        std::string out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int32_t i32() { return static_cast<std::int32_t>(get<std::uint32_t>()); }
    double f64() {
        const std::uint64_t bits = get<std::uint64_t>();
        double x;
        std::memcpy(&x, &bits, sizeof x);
        return x;
    }
    std::string str() { return bytes(u32()); }
    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated data");
    }
    template <class U>
    U get() {
        need(sizeof(U));
        U x = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            x |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return x;
    }

    const std::vector<char>& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& data);

}  // namespace hhflow
