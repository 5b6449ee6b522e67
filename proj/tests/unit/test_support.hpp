#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "ookfso/error.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("ookfso_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void put(std::vector<char>& out, T v) {
    const auto* b = reinterpret_cast<const char*>(&v);
    out.insert(out.end(), b, b + sizeof(T));
}

// Container layout shared by dataset and model files:
// magic, u32 version, u64 header length, JSON header, payload.
inline std::vector<char> container(const std::string& magic, std::uint32_t version, const std::string& header,
                                   const std::vector<char>& payload) {
    std::vector<char> out(magic.begin(), magic.end());
    put<std::uint32_t>(out, version);
    put<std::uint64_t>(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

template <typename Fn>
ookfso::ErrorCode error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const ookfso::Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected an ookfso::Error");
}

} // namespace testing
