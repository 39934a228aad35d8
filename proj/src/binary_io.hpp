#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gradharmony/errors.hpp"

// Little-endian binary stream helpers for the checkpoint and dataset formats.

namespace gradharmony::detail {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

inline void write_bytes(std::ostream& os, const void* data, std::size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void write_scalar(std::ostream& os, T v) {
    write_bytes(os, &v, sizeof(T));
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
    write_bytes(os, v.data(), v.size() * sizeof(double));
}

inline void read_bytes(std::istream& is, void* data, std::size_t n, const char* what) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw IoError(std::string("truncated file while reading ") + what);
}

template <typename T>
T read_scalar(std::istream& is, const char* what) {
    T v;
    read_bytes(is, &v, sizeof(T), what);
    return v;
}

inline std::string read_string(std::istream& is, const char* what) {
    const auto len = read_scalar<std::uint32_t>(is, what);
    std::string s(len, '\0');
    if (len > 0) read_bytes(is, s.data(), len, what);
    return s;
}

inline void read_doubles(std::istream& is, std::vector<double>& v, std::size_t n,
                         const char* what) {
    v.resize(n);
    if (n > 0) read_bytes(is, v.data(), n * sizeof(double), what);
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    return os;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    return is;
}

}  // namespace gradharmony::detail
