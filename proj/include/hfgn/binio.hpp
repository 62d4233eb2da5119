#pragma once

// Little-endian primitives shared by the feature and checkpoint formats.

#include "hfgn/dataset.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace hfgn {

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

private:
    void le(std::uint64_t v, int width) {
        char buf[8];
        for (int k = 0; k < width; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
        bytes(buf, static_cast<std::size_t>(width));
    }
    std::ostream& out_;
};

/// Throws DataError("<source>: truncated ...") on short reads.
class BinaryReader {
public:
    BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    void bytes(char* data, std::size_t n) {
        in_.read(data, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError(source_ + ": truncated file");
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::string str(std::size_t max_len = 1u << 20) {
        const std::uint32_t n = u32();
        if (n > max_len) throw DataError(source_ + ": string length " + std::to_string(n) + " is implausible");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

private:
    std::uint64_t le(int width) {
        unsigned char buf[8];
        bytes(reinterpret_cast<char*>(buf), static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int k = 0; k < width; ++k) v |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
        return v;
    }
    std::istream& in_;
    std::string source_;
};

} // namespace hfgn
