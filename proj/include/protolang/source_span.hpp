#ifndef PROTOLANG_SOURCE_SPAN_HPP
#define PROTOLANG_SOURCE_SPAN_HPP

#include <cstddef>

namespace protolang {

// Half-open byte range into a source text, with 1-based line/column for
// diagnostics. Default-constructed spans (all zeros) mark synthesized nodes.
struct SourceSpan {
    int line_start = 0;
    int col_start = 0;
    int line_end = 0;
    int col_end = 0;
    std::size_t offset_start = 0;
    std::size_t offset_end = 0;

    bool valid() const { return line_start > 0 && offset_start <= offset_end; }
};

inline SourceSpan merge(const SourceSpan& a, const SourceSpan& b) {
    if (!a.valid()) return b;
    if (!b.valid()) return a;
    SourceSpan s = a;
    if (b.offset_start < s.offset_start) {
        s.offset_start = b.offset_start;
        s.line_start = b.line_start;
        s.col_start = b.col_start;
    }
    if (b.offset_end > s.offset_end) {
        s.offset_end = b.offset_end;
        s.line_end = b.line_end;
        s.col_end = b.col_end;
    }
    return s;
}

}  // namespace protolang

#endif
