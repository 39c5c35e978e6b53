#include "protolang/parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <sstream>

#include "protolang/errors.hpp"
#include "protolang/numfmt.hpp"

namespace protolang {

namespace {

enum class Tok {
    ident, number, lparen, rparen, lbracket, rbracket, lbrace, rbrace,
    comma, semi, eq, colon, plus, minus, underscore, arrow, revarrow, hole_open,
    end
};

struct Token {
    Tok kind = Tok::end;
    std::string text;
    SourceSpan span;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
  public:
    Lexer(std::string_view text, int first_line = 1, std::size_t base_offset = 0)
        : text_(text), line_(first_line), base_(base_offset) {
        advance();
    }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, tok_.span); }

    SourceSpan here() const { return tok_.span; }

  private:
    void advance() {
        skip_ws();
        Token t;
        t.span = span_here(0);
        if (pos_ >= text_.size()) {
            t.kind = Tok::end;
            tok_ = t;
            return;
        }
        char c = text_[pos_];
        std::size_t start = pos_;
        if (ident_start(c)) {
            ++pos_;
            while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
            // A trailing + or - belongs to the identifier (species like
            // H+, Cl-) unless it would start another name or an arrow.
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
                char after = pos_ + 1 < text_.size() ? text_[pos_ + 1] : '\0';
                if (!ident_char(after) && after != '>') ++pos_;
            }
            t.kind = text_.substr(start, pos_ - start) == "_" && pos_ - start == 1
                         ? Tok::underscore
                         : Tok::ident;
            t.text = std::string(text_.substr(start, pos_ - start));
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
                ++pos_;
            if (pos_ < text_.size() && text_[pos_] == '.') {
                ++pos_;
                while (pos_ < text_.size() &&
                       std::isdigit(static_cast<unsigned char>(text_[pos_])))
                    ++pos_;
            }
            if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
                std::size_t mark = pos_;
                ++pos_;
                if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
                if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                    while (pos_ < text_.size() &&
                           std::isdigit(static_cast<unsigned char>(text_[pos_])))
                        ++pos_;
                } else {
                    pos_ = mark;  // 'e' starts an identifier, not an exponent
                }
            }
            t.kind = Tok::number;
            t.text = std::string(text_.substr(start, pos_ - start));
        } else {
            switch (c) {
                case '(': t.kind = Tok::lparen; ++pos_; break;
                case ')': t.kind = Tok::rparen; ++pos_; break;
                case '[': t.kind = Tok::lbracket; ++pos_; break;
                case ']': t.kind = Tok::rbracket; ++pos_; break;
                case '{': t.kind = Tok::lbrace; ++pos_; break;
                case '}': t.kind = Tok::rbrace; ++pos_; break;
                case ',': t.kind = Tok::comma; ++pos_; break;
                case ';': t.kind = Tok::semi; ++pos_; break;
                case '=': t.kind = Tok::eq; ++pos_; break;
                case ':': t.kind = Tok::colon; ++pos_; break;
                case '+': t.kind = Tok::plus; ++pos_; break;
                case '$':
                    if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '{') {
                        t.kind = Tok::hole_open;
                        pos_ += 2;
                    } else {
                        throw ParseError("stray '$'", span_here(1));
                    }
                    break;
                case '-':
                    if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
                        t.kind = Tok::arrow;
                        pos_ += 2;
                    } else {
                        t.kind = Tok::minus;
                        ++pos_;
                    }
                    break;
                case '<':
                    if (pos_ + 2 < text_.size() && text_[pos_ + 1] == '-' &&
                        text_[pos_ + 2] == '>') {
                        t.kind = Tok::revarrow;
                        pos_ += 3;
                    } else {
                        throw ParseError("unexpected '<'", span_here(1));
                    }
                    break;
                default:
                    throw ParseError(std::string("unexpected character '") + c + "'",
                                     span_here(1));
            }
        }
        t.span.offset_end = base_ + pos_;
        t.span.line_end = line_;
        t.span.col_end = col_of(pos_);
        tok_ = t;
    }

    void skip_ws() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (c == '\n') {
                ++line_;
                line_start_ = ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int col_of(std::size_t pos) const { return static_cast<int>(pos - line_start_) + 1; }

    SourceSpan span_here(std::size_t len) const {
        SourceSpan s;
        s.line_start = s.line_end = line_;
        s.col_start = col_of(pos_);
        s.col_end = col_of(pos_ + len);
        s.offset_start = base_ + pos_;
        s.offset_end = base_ + pos_ + len;
        return s;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_;
    std::size_t line_start_ = 0;
    std::size_t base_;
    Token tok_;
};

// Converts a number token by a power-of-ten unit factor through a textual
// exponent adjustment, so power-of-ten conversions round exactly once.
double scaled_value(const std::string& digits, int exp_offset, const SourceSpan& span) {
    std::string text = digits;
    if (exp_offset != 0) {
        auto epos = text.find_first_of("eE");
        int e = exp_offset;
        if (epos != std::string::npos) {
            e += std::stoi(text.substr(epos + 1));
            text.erase(epos);
        }
        text += "e" + std::to_string(e);
    }
    double v;
    if (!parse_double(text, v) || !std::isfinite(v))
        throw ParseError("malformed number '" + digits + "'", span);
    return v;
}

struct QuantityRule {
    const char* what;
    // unit name -> power-of-ten exponent (relative to the canonical unit)
    std::vector<std::pair<std::string_view, int>> pow10_units;
    // unit name -> multiplicative factor (for non-decimal units)
    std::vector<std::pair<std::string_view, double>> factor_units;
    bool allow_bare = false;
    int bare_exp10 = 0;
};

class ProtocolParser {
  public:
    ProtocolParser(std::string_view text, const Crn& crn, bool allow_holes)
        : lex_(text), crn_(crn), allow_holes_(allow_holes) {}

    ProtocolPtr parse() {
        ProtocolPtr p = expr();
        if (lex_.peek().kind != Tok::end) lex_.fail("trailing input after protocol");
        return p;
    }

    std::vector<ParsedHole> holes;

  private:
    Token expect(Tok kind, const char* what) {
        if (lex_.peek().kind != kind)
            lex_.fail(std::string("expected ") + what + order_hint());
        return lex_.take();
    }

    std::string order_hint() const {
        const Token& t = lex_.peek();
        if (t.kind == Tok::end) return " before end of input";
        if (!t.text.empty()) return " before '" + t.text + "'";
        return "";
    }

    ProtocolPtr expr() {
        const Token& t = lex_.peek();
        if (t.kind != Tok::ident) lex_.fail("expected an expression");
        SourceSpan start = t.span;
        const std::string& kw = t.text;
        if (kw == "sample") return sample_literal();
        if (kw == "Mix") {
            lex_.take();
            expect(Tok::lparen, "'('");
            ProtocolPtr a = expr();
            expect(Tok::comma, "','");
            ProtocolPtr b = expr();
            SourceSpan end = expect(Tok::rparen, "')'").span;
            return make_protocol(MixNode{a, b}, merge(start, end));
        }
        if (kw == "let") return let_form();
        if (kw == "Equilibrate") {
            lex_.take();
            expect(Tok::lparen, "'('");
            ProtocolPtr a = expr();
            expect(Tok::comma, "','");
            double dur = time_quantity();
            SourceSpan end = expect(Tok::rparen, "')'").span;
            if (dur < 0.0)
                throw ParseError("equilibrate duration must be nonnegative", start);
            return make_protocol(EquilibrateNode{a, dur}, merge(start, end));
        }
        if (kw == "Dispose") {
            lex_.take();
            expect(Tok::lparen, "'('");
            ProtocolPtr a = expr();
            SourceSpan end = expect(Tok::rparen, "')'").span;
            return make_protocol(DisposeNode{a}, merge(start, end));
        }
        if (kw == "Observe") {
            lex_.take();
            expect(Tok::lparen, "'('");
            ProtocolPtr a = expr();
            expect(Tok::comma, "','");
            Token n = expect(Tok::number, "an observation identifier");
            if (n.text.find_first_of(".eE") != std::string::npos)
                throw ParseError("observation identifier must be a natural number", n.span);
            unsigned idn = static_cast<unsigned>(std::stoul(n.text));
            SourceSpan end = expect(Tok::rparen, "')'").span;
            return make_protocol(ObserveNode{a, idn}, merge(start, end));
        }
        if (kw == "Dispense" || kw == "in")
            lex_.fail("'" + kw + "' is a reserved word here");
        Token v = lex_.take();
        return make_protocol(VarNode{v.text}, v.span);
    }

    ProtocolPtr let_form() {
        SourceSpan start = lex_.take().span;  // 'let'
        Token name = expect(Tok::ident, "a variable name");
        reject_keyword(name);
        if (lex_.peek().kind == Tok::comma) {
            lex_.take();
            bool discard = false;
            std::string rest;
            if (lex_.peek().kind == Tok::underscore) {
                lex_.take();
                discard = true;
            } else {
                Token r = expect(Tok::ident, "a variable name or '_'");
                reject_keyword(r);
                rest = r.text;
            }
            expect(Tok::eq, "'='");
            Token d = expect(Tok::ident, "'Dispense'");
            if (d.text != "Dispense") throw ParseError("expected 'Dispense'", d.span);
            expect(Tok::lparen, "'('");
            ProtocolPtr src = expr();
            expect(Tok::comma, "','");
            double p = fraction();
            expect(Tok::rparen, "')'");
            expect_in();
            ProtocolPtr body = expr();
            SourceSpan span = merge(start, body->span);
            if (discard)
                return make_protocol(DispenseDiscardNode{name.text, src, p, body}, span);
            return make_protocol(DispenseNode{name.text, rest, src, p, body}, span);
        }
        expect(Tok::eq, "'='");
        ProtocolPtr bound = expr();
        expect_in();
        ProtocolPtr body = expr();
        return make_protocol(LetNode{name.text, bound, body}, merge(start, body->span));
    }

    void expect_in() {
        Token t = expect(Tok::ident, "'in'");
        if (t.text != "in") throw ParseError("expected 'in'", t.span);
    }

    void reject_keyword(const Token& t) {
        static const char* kws[] = {"let", "in", "sample", "Mix", "Dispense",
                                    "Equilibrate", "Dispose", "Observe"};
        for (const char* k : kws)
            if (t.text == k)
                throw ParseError("'" + t.text + "' is a reserved word", t.span);
    }

    double fraction() {
        if (lex_.peek().kind == Tok::hole_open) {
            record_hole(ParsedHole::dispense_fraction);
            return 0.5;  // placeholder for structural validation
        }
        Token n = expect(Tok::number, "a dispense fraction");
        double p = scaled_value(n.text, 0, n.span);
        if (!(p > 0.0 && p < 1.0))
            throw ParseError("dispense fraction must lie strictly inside (0,1)", n.span);
        return p;
    }

    double time_quantity() {
        if (lex_.peek().kind == Tok::hole_open) {
            record_hole(ParsedHole::equilibrate_time);
            return 1.0;
        }
        Token n = expect(Tok::number, "a time quantity");
        Token u = expect(Tok::ident, "a time unit (s, min, h)");
        if (u.text == "s") return scaled_value(n.text, 0, n.span);
        if (u.text == "min") return scaled_value(n.text, 0, n.span) * 60.0;
        if (u.text == "h") return scaled_value(n.text, 0, n.span) * 3600.0;
        throw ParseError("unknown time unit '" + u.text + "'", u.span);
    }

    void record_hole(ParsedHole::Kind kind) {
        Token open = lex_.take();  // ${
        Token name = expect(Tok::ident, "a parameter name");
        Token close = expect(Tok::rbrace, "'}'");
        if (!allow_holes_)
            throw ParseError("parameter hole '${" + name.text +
                                 "}' is only allowed in sweep templates",
                             name.span);
        holes.push_back({kind, name.text, merge(open.span, close.span)});
    }

    double conc_quantity() {
        Token n = expect(Tok::number, "a concentration");
        bool arbitrary = crn_.declared_unit == ConcUnit::arbitrary;
        if (lex_.peek().kind == Tok::ident) {
            const std::string& u = lex_.peek().text;
            int e = 0;
            bool molar_unit = true;
            if (u == "M") e = 0;
            else if (u == "mM") e = -3;
            else if (u == "uM") e = -6;
            else if (u == "nM") e = -9;
            else if (u == "au") molar_unit = false;
            else return scaled_value(n.text, conc_unit_exp10(crn_.declared_unit), n.span);
            Token ut = lex_.take();
            if (arbitrary && molar_unit)
                throw ParseError("unit mismatch: network uses arbitrary units; '" + u +
                                     "' is not allowed",
                                 ut.span);
            if (!arbitrary && !molar_unit)
                throw ParseError("unit mismatch: network declares molar units", ut.span);
            return scaled_value(n.text, molar_unit ? e : 0, n.span);
        }
        return scaled_value(n.text, conc_unit_exp10(crn_.declared_unit), n.span);
    }

    double volume_quantity() {
        Token n = expect(Tok::number, "a volume");
        Token u = expect(Tok::ident, "a volume unit (L, mL, uL)");
        int e;
        if (u.text == "L") e = 0;
        else if (u.text == "mL") e = -3;
        else if (u.text == "uL") e = -6;
        else throw ParseError("unknown volume unit '" + u.text + "'", u.span);
        double v = scaled_value(n.text, e, n.span);
        if (v < 0.0) throw ParseError("volume must be nonnegative", n.span);
        return v;
    }

    double temperature_quantity() {
        Token n = expect(Tok::number, "a temperature");
        Token u = expect(Tok::ident, "'K'");
        if (u.text != "K") throw ParseError("unknown temperature unit '" + u.text + "'", u.span);
        double v = scaled_value(n.text, 0, n.span);
        if (v < 0.0) throw ParseError("temperature must be nonnegative", n.span);
        return v;
    }

    ProtocolPtr sample_literal() {
        SourceSpan start = lex_.take().span;  // 'sample'
        expect(Tok::lparen, "'('");
        expect(Tok::lbracket, "'['");
        std::vector<double> conc(crn_.size(), 0.0);
        if (lex_.peek().kind == Tok::number) {
            // raw vector form
            std::vector<double> entries;
            entries.push_back(raw_entry());
            while (lex_.peek().kind == Tok::comma) {
                lex_.take();
                entries.push_back(raw_entry());
            }
            if (entries.size() != crn_.size())
                lex_.fail("raw sample vector has " + std::to_string(entries.size()) +
                          " entries; network has " + std::to_string(crn_.size()) + " species");
            conc = std::move(entries);
        } else if (lex_.peek().kind == Tok::ident) {
            for (;;) {
                Token s = expect(Tok::ident, "a species name");
                auto idx = crn_.species_index(s.text);
                if (!idx) throw ParseError("unknown species '" + s.text + "'", s.span);
                expect(Tok::eq, "'='");
                double v = conc_quantity();
                if (v < 0.0) throw ParseError("concentration must be nonnegative", s.span);
                conc[*idx] = v;
                if (lex_.peek().kind != Tok::comma) break;
                lex_.take();
            }
        }
        expect(Tok::rbracket, "']'");
        expect(Tok::semi, "';'");
        double vol = volume_quantity();
        expect(Tok::semi, "';'");
        double temp = temperature_quantity();
        SourceSpan end = expect(Tok::rparen, "')'").span;
        return make_protocol(InitialNode{std::move(conc), vol, temp}, merge(start, end));
    }

    double raw_entry() {
        Token n = expect(Tok::number, "a concentration");
        double v = scaled_value(n.text, conc_unit_exp10(crn_.declared_unit), n.span);
        if (v < 0.0) throw ParseError("concentration must be nonnegative", n.span);
        return v;
    }

    Lexer lex_;
    const Crn& crn_;
    bool allow_holes_;
};

}  // namespace

ProtocolPtr parse_protocol(std::string_view text, const Crn& crn) {
    ProtocolParser p(text, crn, /*allow_holes=*/false);
    return p.parse();
}

ProtocolTemplate parse_protocol_template(std::string_view text, const Crn& crn) {
    ProtocolParser p(text, crn, /*allow_holes=*/true);
    p.parse();  // structural validation with placeholder values
    ProtocolTemplate t;
    t.text = std::string(text);
    t.holes = std::move(p.holes);
    std::sort(t.holes.begin(), t.holes.end(),
              [](const ParsedHole& a, const ParsedHole& b) {
                  return a.span.offset_start < b.span.offset_start;
              });
    return t;
}

ProtocolPtr instantiate(const ProtocolTemplate& tmpl, const Crn& crn,
                        const std::map<std::string, double>& values) {
    std::string text = tmpl.text;
    for (auto it = tmpl.holes.rbegin(); it != tmpl.holes.rend(); ++it) {
        auto found = values.find(it->name);
        if (found == values.end())
            throw StructuralError("unbound template parameter '" + it->name + "'");
        std::string repl = format_double(found->second);
        if (it->kind == ParsedHole::equilibrate_time) repl += " s";
        text.replace(it->span.offset_start, it->span.offset_end - it->span.offset_start, repl);
    }
    return parse_protocol(text, crn);
}

namespace {

struct PendingReaction {
    std::vector<std::pair<std::size_t, unsigned>> source;  // species idx -> coeff
    std::vector<std::pair<std::size_t, unsigned>> product;
    double rate;
};

class CrnParser {
  public:
    explicit CrnParser(std::string_view text, std::vector<std::string>* warnings)
        : text_(text), warnings_(warnings) {}

    Crn parse() {
        Lexer lex(text_);
        parse_header(lex);
        while (lex.peek().kind != Tok::end) parse_reaction(lex);

        Crn crn;
        crn.declared_unit = conc_unit_;
        crn.species.reserve(species_.size());
        for (std::size_t i = 0; i < species_.size(); ++i)
            crn.species.push_back({species_[i], i});
        for (const PendingReaction& pr : pending_) {
            Reaction r;
            r.source.assign(species_.size(), 0);
            r.product.assign(species_.size(), 0);
            for (auto [idx, c] : pr.source) r.source[idx] += c;
            for (auto [idx, c] : pr.product) r.product[idx] += c;
            r.rate = pr.rate;
            crn.reactions.push_back(std::move(r));
        }
        crn.validate();
        if (warnings_)
            for (std::string& w : lint_crn(crn)) warnings_->push_back(std::move(w));
        return crn;
    }

  private:
    void parse_header(Lexer& lex) {
        Token t = lex.take();
        if (t.kind != Tok::ident || t.text != "units")
            throw ParseError("expected 'units: <conc>, <time>' header", t.span);
        if (lex.take().kind != Tok::colon) throw ParseError("expected ':'", t.span);
        Token cu = lex.take();
        if (cu.kind != Tok::ident) throw ParseError("expected a concentration unit", cu.span);
        if (cu.text == "M") conc_unit_ = ConcUnit::molar;
        else if (cu.text == "mM") conc_unit_ = ConcUnit::milli_molar;
        else if (cu.text == "uM") conc_unit_ = ConcUnit::micro_molar;
        else if (cu.text == "nM") conc_unit_ = ConcUnit::nano_molar;
        else if (cu.text == "au") conc_unit_ = ConcUnit::arbitrary;
        else throw ParseError("unknown concentration unit '" + cu.text + "'", cu.span);
        Token comma = lex.take();
        if (comma.kind != Tok::comma) throw ParseError("expected ','", comma.span);
        Token tu = lex.take();
        if (tu.kind != Tok::ident) throw ParseError("expected a time unit", tu.span);
        if (tu.text == "s") time_factor_ = 1.0;
        else if (tu.text == "min") time_factor_ = 60.0;
        else if (tu.text == "h") time_factor_ = 3600.0;
        else throw ParseError("unknown time unit '" + tu.text + "'", tu.span);
    }

    std::size_t species_id(const std::string& name) {
        for (std::size_t i = 0; i < species_.size(); ++i)
            if (species_[i] == name) return i;
        species_.push_back(name);
        return species_.size() - 1;
    }

    std::vector<std::pair<std::size_t, unsigned>> parse_complex(Lexer& lex) {
        std::vector<std::pair<std::size_t, unsigned>> terms;
        // `0` denotes the empty complex
        if (lex.peek().kind == Tok::number && lex.peek().text == "0") {
            lex.take();
            return terms;
        }
        for (;;) {
            unsigned coeff = 1;
            if (lex.peek().kind == Tok::number) {
                Token n = lex.take();
                if (n.text.find_first_of(".eE") != std::string::npos)
                    throw ParseError("stoichiometric coefficient must be a natural number",
                                     n.span);
                coeff = static_cast<unsigned>(std::stoul(n.text));
                if (coeff == 0)
                    throw ParseError("stoichiometric coefficient must be positive", n.span);
            }
            Token s = lex.take();
            if (s.kind != Tok::ident) throw ParseError("expected a species name", s.span);
            std::size_t idx = species_id(s.text);
            bool merged = false;
            for (auto& [i, c] : terms) {
                if (i == idx) {
                    c += coeff;
                    merged = true;
                    if (warnings_)
                        warnings_->push_back("duplicate species '" + s.text +
                                             "' in one complex; coefficients summed");
                    break;
                }
            }
            if (!merged) terms.emplace_back(idx, coeff);
            if (lex.peek().kind != Tok::plus) break;
            lex.take();
        }
        return terms;
    }

    double parse_rate(Lexer& lex) {
        Token lb = lex.take();
        if (lb.kind != Tok::lbrace) throw ParseError("expected '{rate}'", lb.span);
        bool negative = false;
        if (lex.peek().kind == Tok::minus) {
            lex.take();
            negative = true;
        }
        Token n = lex.take();
        if (n.kind != Tok::number) throw ParseError("expected a rate constant", n.span);
        double k = scaled_value(n.text, 0, n.span);
        if (negative || !(k > 0.0))
            throw ParseError("nonpositive rate", n.span);
        Token rb = lex.take();
        if (rb.kind != Tok::rbrace) throw ParseError("expected '}'", rb.span);
        return k;
    }

    // k, quoted at the declared units, rescaled to mol/L and seconds.
    double rescale(double k, const std::string& ktext, unsigned order,
                   const SourceSpan& span) {
        int e = conc_unit_exp10(conc_unit_);
        double v = k;
        if (e != 0 && conc_unit_ != ConcUnit::arbitrary) {
            int shift = e * (1 - static_cast<int>(order));
            v = scaled_value(ktext, shift, span);
        }
        return v / time_factor_;
    }

    void parse_reaction(Lexer& lex) {
        auto lhs = parse_complex(lex);
        Token arrow = lex.take();
        if (arrow.kind == Tok::arrow) {
            Token rate_prefix = lex.peek();
            double k = parse_rate(lex);
            auto rhs = parse_complex(lex);
            push_reaction(lhs, rhs, k, rate_prefix.span);
        } else if (arrow.kind == Tok::revarrow) {
            Token rp1 = lex.peek();
            double kf = parse_rate(lex);
            Token rp2 = lex.peek();
            double kr = parse_rate(lex);
            auto rhs = parse_complex(lex);
            push_reaction(lhs, rhs, kf, rp1.span);
            push_reaction(rhs, lhs, kr, rp2.span);
        } else {
            throw ParseError("expected '->' or '<->'", arrow.span);
        }
    }

    void push_reaction(const std::vector<std::pair<std::size_t, unsigned>>& src,
                       const std::vector<std::pair<std::size_t, unsigned>>& prod, double k,
                       const SourceSpan& span) {
        unsigned order = 0;
        for (auto [i, c] : src) order += c;
        PendingReaction pr;
        pr.source = src;
        pr.product = prod;
        pr.rate = rescale_cached(k, order, span);
        pending_.push_back(std::move(pr));
    }

    double rescale_cached(double k, unsigned order, const SourceSpan& span) {
        int e = conc_unit_exp10(conc_unit_);
        if (e == 0 || conc_unit_ == ConcUnit::arbitrary) return k / time_factor_;
        double factor = std::pow(10.0, e * (1 - static_cast<int>(order)));
        (void)span;
        return k * factor / time_factor_;
    }

    std::string_view text_;
    std::vector<std::string>* warnings_;
    ConcUnit conc_unit_ = ConcUnit::molar;
    double time_factor_ = 1.0;
    std::vector<std::string> species_;
    std::vector<PendingReaction> pending_;
};

void print_expr(std::ostringstream& os, const ProtocolPtr& p, const Crn& crn) {
    bool arbitrary = crn.declared_unit == ConcUnit::arbitrary;
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                os << n.name;
            } else if constexpr (std::is_same_v<T, InitialNode>) {
                os << "sample([";
                bool first = true;
                for (std::size_t i = 0; i < n.conc.size(); ++i) {
                    if (n.conc[i] == 0.0) continue;
                    if (!first) os << ", ";
                    first = false;
                    os << crn.species[i].name << " = " << format_double(n.conc[i]);
                    if (!arbitrary) os << " M";
                }
                os << "]; " << format_double(n.volume_l) << " L; "
                   << format_double(n.temperature_k) << " K)";
            } else if constexpr (std::is_same_v<T, MixNode>) {
                os << "Mix(";
                print_expr(os, n.left, crn);
                os << ", ";
                print_expr(os, n.right, crn);
                os << ")";
            } else if constexpr (std::is_same_v<T, LetNode>) {
                os << "let " << n.var << " = ";
                print_expr(os, n.bound, crn);
                os << " in\n";
                print_expr(os, n.body, crn);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                os << "let " << n.take_var << ", " << n.rest_var << " = Dispense(";
                print_expr(os, n.source, crn);
                os << ", " << format_double(n.fraction) << ") in\n";
                print_expr(os, n.body, crn);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                os << "let " << n.take_var << ", _ = Dispense(";
                print_expr(os, n.source, crn);
                os << ", " << format_double(n.fraction) << ") in\n";
                print_expr(os, n.body, crn);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                os << "Equilibrate(";
                print_expr(os, n.inner, crn);
                os << ", " << format_double(n.duration_s) << " s)";
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                os << "Dispose(";
                print_expr(os, n.inner, crn);
                os << ")";
            } else {
                const auto& ob = std::get<ObserveNode>(p->node);
                os << "Observe(";
                print_expr(os, ob.inner, crn);
                os << ", " << ob.idn << ")";
            }
        },
        p->node);
}

}  // namespace

Crn parse_crn(std::string_view text, std::vector<std::string>* warnings) {
    CrnParser p(text, warnings);
    return p.parse();
}

std::string pretty_print(const ProtocolPtr& p, const Crn& crn) {
    std::ostringstream os;
    print_expr(os, p, crn);
    os << "\n";
    return os.str();
}

}  // namespace protolang
