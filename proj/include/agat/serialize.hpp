#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "agat/errors.hpp"

namespace agat {

// All binary artifacts are little-endian regardless of host order.

inline void put_u32(std::string& out, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(out, bits);
}

class ByteReader {
  public:
    explicit ByteReader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() {
        check(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return x;
    }
    std::uint64_t u64() {
        check(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return x;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double x;
        std::memcpy(&x, &bits, 8);
        return x;
    }
    std::string bytes(size_t n) {
        check(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }

  private:
    void check(size_t n) const {
        if (pos_ + n > data_.size()) throw std::runtime_error("truncated binary file");
    }
    std::string data_;
    size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

// FNV-1a 64-bit; used for config and manifest fingerprints.
inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}
inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string to_hex(std::uint64_t x) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[x & 0xf];
        x >>= 4;
    }
    return s;
}

inline std::string hash_hex(const std::string& bytes) { return to_hex(fnv1a64(bytes)); }

inline std::string hash_file_hex(const std::string& path) { return hash_hex(read_file(path)); }

}  // namespace agat
