#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ookfso/error.hpp"

namespace ookfso::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void floats(std::span<const float> v) { raw(v.data(), v.size_bytes()); }
    void u8s(std::span<const std::uint8_t> v) { raw(v.data(), v.size()); }

    const std::vector<char>& buffer() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    std::vector<char> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

    std::size_t remaining() const { return data_.size() - pos_; }

    bool try_bytes(std::size_t n, std::string& out) {
        if (remaining() < n) return false;
        out.assign(data_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    std::uint32_t u32(const char* what) { return pod<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return pod<std::uint64_t>(what); }

    void floats(std::span<float> out, const char* what) {
        need(out.size_bytes(), what);
        std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }
    void u8s(std::span<std::uint8_t> out, const char* what) {
        need(out.size(), what);
        std::memcpy(out.data(), data_.data() + pos_, out.size());
        pos_ += out.size();
    }

private:
    template <typename T>
    T pod(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    void need(std::size_t n, const char* what) {
        if (remaining() < n)
            fail(ErrorCode::truncated_payload, std::string("truncated payload while reading ") + what);
    }

    std::vector<char> data_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        fail(ErrorCode::file_not_found, "file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

// Writes to a sibling temp file then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> data) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::io, "cannot write " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) fail(ErrorCode::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

} // namespace ookfso::detail
