#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gexse::binio {

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Little-endian byte sink. `finish()` appends the FNV-1a checksum of
/// everything written so far.
class Writer {
public:
    void bytes(const void* p, std::size_t n);
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v);
    void str16(std::string_view s);
    void str32(std::string_view s);
    void f64s(const double* p, std::size_t n);

    void finish();
    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    /// Writes via a temporary file and rename, so readers never see a partial file.
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every failure is a data error mentioning `what`.
class Reader {
public:
    Reader(std::vector<std::uint8_t> buf, std::string what);
    static Reader open(const std::filesystem::path& path);

    /// Validates and strips the trailing checksum.
    void verify_checksum();
    void expect_magic(std::string_view magic);

    void bytes(void* p, std::size_t n);
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64();
    std::string str16();
    std::string str32();
    void f64s(double* p, std::size_t n);

    std::size_t remaining() const { return end_ - pos_; }
    bool at_end() const { return pos_ == end_; }
    const std::string& what() const { return what_; }

private:
    void need(std::size_t n);
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
    std::string what_;
};

}  // namespace gexse::binio
