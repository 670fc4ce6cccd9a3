#include "gexse/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gexse/error.hpp"

namespace gexse::binio {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& buf, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void Writer::bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
}
void Writer::u16(std::uint16_t v) { put_le(buf_, v); }
void Writer::u32(std::uint32_t v) { put_le(buf_, v); }
void Writer::u64(std::uint64_t v) { put_le(buf_, v); }
void Writer::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void Writer::str16(std::string_view s) {
    if (s.size() > 0xffff) throw_usage("string too long for a 16-bit length field");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
}

void Writer::str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void Writer::f64s(const double* p, std::size_t n) {
    buf_.reserve(buf_.size() + 8 * n);
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
}

void Writer::finish() { u64(fnv1a(buf_.data(), buf_.size())); }

void Writer::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw_data("cannot write " + tmp.string());
        os.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!os) throw_data("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_data("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Reader::Reader(std::vector<std::uint8_t> buf, std::string what)
    : buf_(std::move(buf)), end_(buf_.size()), what_(std::move(what)) {}

Reader Reader::open(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_data("cannot open " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return Reader(std::move(buf), path.string());
}

void Reader::verify_checksum() {
    if (end_ < 8) throw_data(what_ + ": truncated (no checksum)");
    const std::uint64_t stored = get_le<std::uint64_t>(buf_.data() + end_ - 8);
    const std::uint64_t actual = fnv1a(buf_.data(), end_ - 8);
    if (stored != actual) throw_data(what_ + ": checksum mismatch (file corrupted or truncated)");
    end_ -= 8;
}

void Reader::expect_magic(std::string_view magic) {
    if (remaining() < magic.size() || std::memcmp(buf_.data() + pos_, magic.data(), magic.size()) != 0) {
        throw_data(what_ + ": bad magic, not a " + std::string(magic.substr(0, magic.find('\0'))) + " file");
    }
    pos_ += magic.size();
}

void Reader::need(std::size_t n) {
    if (remaining() < n) throw_data(what_ + ": truncated at byte " + std::to_string(pos_));
}

void Reader::bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
}

std::uint8_t Reader::u8() {
    need(1);
    return buf_[pos_++];
}

#define GEXSE_READ_LE(T)                       \
    need(sizeof(T));                           \
    const T v = get_le<T>(buf_.data() + pos_); \
    pos_ += sizeof(T);                         \
    return v

std::uint16_t Reader::u16() { GEXSE_READ_LE(std::uint16_t); }
std::uint32_t Reader::u32() { GEXSE_READ_LE(std::uint32_t); }
std::uint64_t Reader::u64() { GEXSE_READ_LE(std::uint64_t); }
#undef GEXSE_READ_LE

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str16() {
    const std::size_t n = u16();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

std::string Reader::str32() {
    const std::size_t n = u32();
    need(n);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

void Reader::f64s(double* p, std::size_t n) {
    if (n > remaining() / 8) throw_data(what_ + ": truncated at byte " + std::to_string(pos_));
    for (std::size_t i = 0; i < n; ++i) p[i] = f64();
}

}  // namespace gexse::binio
