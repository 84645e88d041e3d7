#pragma once

#include "dasleak/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

namespace dasleak::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

/// Little-endian primitive writer over an ostream.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }

    void put_magic(std::string_view magic) { out_.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

    void put_bytes(std::string_view bytes) { out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::span<const T> values) {
        out_.write(reinterpret_cast<const char*>(values.data()),
                   static_cast<std::streamsize>(values.size_bytes()));
    }

    bool good() const { return static_cast<bool>(out_); }

private:
    std::ostream& out_;
};

/// Little-endian primitive reader; every short read raises FormatError.
class BinaryReader {
public:
    BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(const char* what) {
        T value{};
        read_raw(reinterpret_cast<char*>(&value), sizeof(T), what);
        return value;
    }

    void expect_magic(std::string_view magic) {
        std::string buf(magic.size(), '\0');
        read_raw(buf.data(), buf.size(), "magic");
        if (buf != magic)
            throw FormatError(source_ + ": bad magic (expected \"" + std::string(magic) + "\")");
    }

    std::string get_bytes(std::size_t n, const char* what) {
        std::string buf(n, '\0');
        read_raw(buf.data(), n, what);
        return buf;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void get_array(std::span<T> values, const char* what) {
        read_raw(reinterpret_cast<char*>(values.data()), values.size_bytes(), what);
    }

    /// Throws unless the stream is exhausted.
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof())
            throw FormatError(source_ + ": trailing bytes after payload");
    }

    const std::string& source() const { return source_; }

private:
    void read_raw(char* dst, std::size_t n, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(source_ + ": truncated while reading " + what);
    }

    std::istream& in_;
    std::string source_;
};

/**
 * Writes a file through a sibling temporary and renames it into place on
 * commit(), so readers never observe a partial file. The temporary is
 * removed if commit() is never reached.
 */
class AtomicFile {
public:
    explicit AtomicFile(std::filesystem::path target);
    ~AtomicFile();

    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    std::ostream& stream();
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path temp_;
    std::ofstream out_;
    bool committed_ = false;
};

/// Writes text atomically.
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

} // namespace dasleak::io
