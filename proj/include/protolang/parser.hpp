#ifndef PROTOLANG_PARSER_HPP
#define PROTOLANG_PARSER_HPP

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "protolang/ast.hpp"
#include "protolang/crn.hpp"
#include "protolang/source_span.hpp"

namespace protolang {

// Protocol text grammar:
//
//   protocol := expr
//   expr     := IDENT
//             | "sample" "(" speclist ";" quantity ";" quantity ")"
//             | "Mix" "(" expr "," expr ")"
//             | "let" IDENT "=" expr "in" expr
//             | "let" IDENT "," (IDENT | "_") "="
//                     "Dispense" "(" expr "," fraction ")" "in" expr
//             | "Equilibrate" "(" expr "," time ")"
//             | "Dispose" "(" expr ")"
//             | "Observe" "(" expr "," NAT ")"
//   speclist := "[" "]"
//             | "[" IDENT "=" quantity ("," IDENT "=" quantity)* "]"
//             | "[" NUMBER ("," NUMBER)* "]"          (raw vector form)
//
// Comments run from '#' to end of line. Concentrations accept M, mM, uM,
// nM (or bare numbers in the CRN's declared unit); volumes L, mL, uL;
// temperatures K; times s, min, h. `${name}` placeholders may stand for a
// dispense fraction or an equilibrate time when parsing a template.

struct ParsedHole {
    enum Kind { dispense_fraction, equilibrate_time } kind;
    std::string name;
    SourceSpan span;  // covers the `${name}` text, for splicing
};

// Parses a concrete protocol; species in sample literals are resolved
// against crn's ordering. Throws ParseError. Rejects `${...}` holes.
ProtocolPtr parse_protocol(std::string_view text, const Crn& crn);

struct ProtocolTemplate {
    std::string text;
    std::vector<ParsedHole> holes;  // ordered by offset
};

// Like parse_protocol but records holes; the returned template is
// instantiated per parameter assignment. The protocol structure is
// validated at parse time with placeholder values.
ProtocolTemplate parse_protocol_template(std::string_view text, const Crn& crn);

// Splices values into the hole spans and re-parses. Every hole must be
// assigned; durations are given in seconds.
ProtocolPtr instantiate(const ProtocolTemplate& tmpl, const Crn& crn,
                        const std::map<std::string, double>& values);

// CRN text format: a `units: <conc>, <time>` header, then one reaction per
// line, e.g. `2A + B ->{0.0003} C`. `<->{kf}{kr}` expands to two
// reactions; `0` denotes the empty complex. The species set is the union
// of mentioned species in first-appearance order. Rates are rescaled to
// mol/L and seconds unless the declared unit is `au`.
Crn parse_crn(std::string_view text, std::vector<std::string>* warnings = nullptr);

// Canonical rendering; parse_protocol(pretty_print(p, crn), crn) is
// structurally equal to p. Base units (M, L, K, s) are emitted, or bare
// numbers for an `au` network.
std::string pretty_print(const ProtocolPtr& p, const Crn& crn);

}  // namespace protolang

#endif
