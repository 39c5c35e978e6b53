#ifndef PROTOLANG_NUMFMT_HPP
#define PROTOLANG_NUMFMT_HPP

#include <charconv>
#include <string>
#include <string_view>

namespace protolang {

// Shortest decimal representation that parses back to the same double.
// Used by the pretty printer and the CSV writers so that text output is
// both round-trippable and byte-stable.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

}  // namespace protolang

#endif
