#pragma once

// Little-endian binary stream helpers shared by the FVD1/FVR1/FVC1 formats.
// Host is assumed little-endian; refuse to build otherwise.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "fvstack/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

namespace fvstack::io {

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw DataError("cannot open file: " + path);
    }

    std::uint64_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

    void raw(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw DataError(path_ + ": truncated payload at byte offset " +
                            std::to_string(offset_));
        }
        offset_ += n;
    }

    template <typename T>
    T get() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    std::string str(std::size_t n) {
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    std::string path_;
    std::ifstream in_;
    std::uint64_t offset_ = 0;
};

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw DataError("cannot open file for writing: " + path);
    }

    void raw(const void* src, std::size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
        if (!out_) throw DataError(path_ + ": write failure");
    }

    template <typename T>
    void put(T v) {
        raw(&v, sizeof(T));
    }

    void str(const std::string& s) { raw(s.data(), s.size()); }

    void close() {
        out_.close();
        if (!out_) throw DataError(path_ + ": close failure");
    }

private:
    std::string path_;
    std::ofstream out_;
};

}  // namespace fvstack::io
