#ifndef TRAJDET_TEXT_FORMAT_HPP
#define TRAJDET_TEXT_FORMAT_HPP

#include <cstdio>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>

#include "trajdet/errors.hpp"

namespace trajdet {

/// Shortest text that is still `%.17g`: 17 significant digits, which
/// round-trips every finite double exactly.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_real_array(std::span<const double> values) {
    std::string s = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ", ";
        s += format_real(values[i]);
    }
    s += ']';
    return s;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingFileError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace trajdet

#endif  // TRAJDET_TEXT_FORMAT_HPP
