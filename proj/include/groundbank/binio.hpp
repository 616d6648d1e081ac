#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace groundbank {

// Little-endian encoding helpers, independent of host byte order.
inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char(uint8_t(v >> (8 * i))));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char(uint8_t(v >> (8 * i))));
}

inline void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

inline void put_f64_span(std::string& out, const std::vector<double>& v) {
    for (double x : v) put_f64(out, x);
}

// Reader over an in-memory buffer. Callers check remaining() before get_*.
struct ByteReader {
    const std::string& buf;
    size_t pos = 0;

    explicit ByteReader(const std::string& b) : buf(b) {}

    size_t remaining() const { return buf.size() - pos; }

    uint32_t get_u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos++])) << (8 * i);
        return v;
    }

    uint64_t get_u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos++])) << (8 * i);
        return v;
    }

    double get_f64() {
        uint64_t bits = get_u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

// Whole-file read/write. Throw io_error on failure.
std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

} // namespace groundbank
