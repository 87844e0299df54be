#pragma once

// Internal little-endian wire helpers for the binary file formats.
// Not installed; include from core sources only.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "prunekit/errors.hpp"

namespace prunekit::wire {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

struct Writer {
    std::vector<unsigned char> buf;

    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
};

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t off = 0;
    std::size_t limit;
    std::string who;

    Reader(const std::vector<unsigned char>& b, std::size_t lim, std::string w)
        : buf(b), limit(lim), who(std::move(w)) {}

    void need(std::size_t n) {
        if (off + n > limit) throw DataError(who + ": truncated record");
    }
    std::uint8_t u8() {
        need(1);
        return buf[off++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + off), n);
        off += n;
        return s;
    }
    bool done() const { return off == limit; }
};

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> buf(static_cast<std::size_t>(size));
    if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), size);
    if (!f) throw DataError("cannot read " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("cannot write " + path);
}

// Appends crc32 of the current buffer.
inline void seal(Writer& w) {
    const std::uint32_t c = crc32(w.buf.data(), w.buf.size());
    w.u32(c);
}

// Verifies the 4-byte crc trailer; returns the payload length.
inline std::size_t check_seal(const std::vector<unsigned char>& buf, const std::string& who) {
    if (buf.size() < 4) throw DataError(who + ": file too small");
    const std::size_t n = buf.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[n + i]) << (8 * i);
    if (crc32(buf.data(), n) != stored) throw DataError(who + ": checksum mismatch");
    return n;
}

}  // namespace prunekit::wire
