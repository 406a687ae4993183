#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "koneco/error.hpp"
#include "koneco/semap.hpp"

namespace koneco {
namespace turtle {

struct PrefixMap {
    // Ordered (label, IRI) pairs; must include "kg".
    std::vector<std::pair<std::string, std::string>> prefixes;

    static PrefixMap default_kg() {
        return PrefixMap{{{"kg", "http://www.koneco.de/kg#"}}};
    }

    const std::string* iri_of(std::string_view label) const {
        for (const auto& [l, iri] : prefixes)
            if (l == label) return &iri;
        return nullptr;
    }

    void validate() const {
        if (!iri_of("kg")) throw ArgumentError("prefix map must include 'kg'");
        std::vector<std::string> labels;
        for (const auto& [l, iri] : prefixes) {
            if (iri.empty()) throw ArgumentError("empty IRI for prefix '" + l + "'");
            labels.push_back(l);
        }
        std::sort(labels.begin(), labels.end());
        if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
            throw ArgumentError("duplicate prefix label");
    }
};

namespace detail {

inline bool is_local_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
inline bool is_local_char(char c) {
    return is_local_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

// Strict prefixed-name local part: letter or '_' first, then letters, digits,
// '_', '-' or '.', not ending in '.'.
inline bool is_legal_local(std::string_view s) {
    if (s.empty() || !is_local_start(s[0]) || s.back() == '.') return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return is_local_char(c); });
}

inline bool is_absolute_iri(std::string_view s) {
    auto pos = s.find("://");
    if (pos == std::string_view::npos || pos == 0) return false;
    for (char c : s)
        if (c == ' ' || c == '<' || c == '>' || c == '"' || c == '{' || c == '}' || c == '|' ||
            c == '^' || c == '`' || c == '\n' || c == '\t')
            return false;
    return true;
}

inline void emit_term(std::string& out, const std::string& label) {
    if (is_legal_local(label)) {
        out += "kg:";
        out += label;
    } else if (is_absolute_iri(label)) {
        out += '<';
        out += label;
        out += '>';
    } else {
        throw SerializeError("label not expressible as a prefixed name or IRI: '" + label + "'");
    }
}

}  // namespace detail

// Byte-deterministic Turtle output: @prefix declarations followed by one
// statement per line, sorted by (subject, predicate, object) label.
inline std::string serialize(const TripleSet& ts, const PrefixMap& prefixes = PrefixMap::default_kg()) {
    prefixes.validate();
    std::string out;
    for (const auto& [label, iri] : prefixes.prefixes) {
        out += "@prefix ";
        out += label;
        out += ": <";
        out += iri;
        out += "> .\n";
    }
    // Triples are stored sorted by ids, and ids are label-sorted.
    for (const auto& t : ts.triples) {
        detail::emit_term(out, ts.entity_label(t.s));
        out += ' ';
        detail::emit_term(out, ts.relation_label(t.p));
        out += ' ';
        detail::emit_term(out, ts.entity_label(t.o));
        out += " .\n";
    }
    return out;
}

namespace detail {

struct Token {
    enum class Kind { prefix_kw, pname_ns, pname, iriref, dot, semicolon, comma, eof };
    Kind kind = Kind::eof;
    std::string text;    // pname: "prefix:local"; iriref: the IRI; pname_ns: prefix label
    std::size_t line = 1, col = 1;
};

class Lexer {
  public:
    explicit Lexer(std::string_view text) : text_(text) {}

    Token next() {
        skip_ws_and_comments();
        Token tok;
        tok.line = line_;
        tok.col = col_;
        if (pos_ >= text_.size()) {
            // Report end-of-input at the last content position, not past a
            // trailing newline.
            tok.line = last_line_;
            tok.col = last_col_ + 1;
            return tok;  // eof
        }
        char c = text_[pos_];
        if (c == '.') {
            advance();
            tok.kind = Token::Kind::dot;
            return tok;
        }
        if (c == ';') {
            advance();
            tok.kind = Token::Kind::semicolon;
            return tok;
        }
        if (c == ',') {
            advance();
            tok.kind = Token::Kind::comma;
            return tok;
        }
        if (c == '<') {
            advance();
            std::string iri;
            while (pos_ < text_.size() && text_[pos_] != '>') {
                if (text_[pos_] == '\n') throw ParseError("unterminated IRI", tok.line, tok.col);
                iri.push_back(text_[pos_]);
                advance();
            }
            if (pos_ >= text_.size()) throw ParseError("unterminated IRI", tok.line, tok.col);
            advance();  // consume '>'
            tok.kind = Token::Kind::iriref;
            tok.text = std::move(iri);
            return tok;
        }
        if (c == '@') {
            std::size_t start = pos_;
            while (pos_ < text_.size() && !is_ws(text_[pos_])) advance();
            std::string word(text_.substr(start, pos_ - start));
            if (word != "@prefix") throw ParseError("unknown directive '" + word + "'", tok.line, tok.col);
            tok.kind = Token::Kind::prefix_kw;
            return tok;
        }
        if (is_pname_char(c)) {
            std::size_t start = pos_;
            while (pos_ < text_.size() && is_pname_char(text_[pos_])) advance();
            std::string word(text_.substr(start, pos_ - start));
            // A trailing '.' belongs to the statement terminator, not the name.
            while (!word.empty() && word.back() == '.') {
                --pos_;
                --col_;
                word.pop_back();
            }
            auto colon = word.find(':');
            if (colon == std::string::npos)
                throw ParseError("expected a prefixed name, found '" + word + "'", tok.line, tok.col);
            if (colon == word.size() - 1) {
                tok.kind = Token::Kind::pname_ns;
                tok.text = word.substr(0, colon);
            } else {
                tok.kind = Token::Kind::pname;
                tok.text = std::move(word);
            }
            return tok;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", tok.line, tok.col);
    }

  private:
    static bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }
    static bool is_pname_char(char c) {
        return is_local_char(c) || c == ':';
    }

    void skip_ws_and_comments() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (is_ws(c)) {
                advance();
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    void advance() {
        if (!is_ws(text_[pos_])) {
            last_line_ = line_;
            last_col_ = col_;
        }
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1, col_ = 1;
    std::size_t last_line_ = 1, last_col_ = 0;
};

}  // namespace detail

// Parses the dialect emitted by serialize. ';' predicate lists and ','
// object lists are accepted on input. Terms under the kg namespace map back
// to bare labels; other IRIs stay as full-IRI labels.
inline TripleSet parse(std::string_view text,
                       const std::string& kg_base_default = "http://www.koneco.de/kg#") {
    detail::Lexer lexer(text);
    std::map<std::string, std::string> prefix_iri;
    std::string kg_base = kg_base_default;

    TripleSetBuilder builder;
    auto resolve = [&](const detail::Token& tok) -> std::string {
        if (tok.kind == detail::Token::Kind::iriref) {
            if (tok.text.size() > kg_base.size() && tok.text.starts_with(kg_base)) {
                std::string local = tok.text.substr(kg_base.size());
                if (detail::is_legal_local(local)) return local;
            }
            return tok.text;
        }
        auto colon = tok.text.find(':');
        std::string prefix = tok.text.substr(0, colon);
        std::string local = tok.text.substr(colon + 1);
        auto it = prefix_iri.find(prefix);
        if (it == prefix_iri.end())
            throw ParseError("undeclared prefix '" + prefix + "'", tok.line, tok.col);
        if (it->second == kg_base) return local;
        return it->second + local;
    };

    detail::Token tok = lexer.next();
    while (tok.kind != detail::Token::Kind::eof) {
        if (tok.kind == detail::Token::Kind::prefix_kw) {
            auto ns = lexer.next();
            if (ns.kind != detail::Token::Kind::pname_ns)
                throw ParseError("expected a prefix label after @prefix", ns.line, ns.col);
            auto iri = lexer.next();
            if (iri.kind != detail::Token::Kind::iriref)
                throw ParseError("expected an IRI in @prefix", iri.line, iri.col);
            auto dot = lexer.next();
            if (dot.kind != detail::Token::Kind::dot)
                throw ParseError("expected '.' after @prefix declaration", dot.line, dot.col);
            prefix_iri[ns.text] = iri.text;
            if (ns.text == "kg") kg_base = iri.text;
            tok = lexer.next();
            continue;
        }
        if (tok.kind != detail::Token::Kind::pname && tok.kind != detail::Token::Kind::iriref)
            throw ParseError("expected a subject term", tok.line, tok.col);
        std::string subject = resolve(tok);
        // predicate (objectList) groups separated by ';', terminated by '.'
        while (true) {
            auto ptok = lexer.next();
            if (ptok.kind != detail::Token::Kind::pname && ptok.kind != detail::Token::Kind::iriref)
                throw ParseError("expected a predicate term", ptok.line, ptok.col);
            std::string predicate = resolve(ptok);
            while (true) {
                auto otok = lexer.next();
                if (otok.kind != detail::Token::Kind::pname && otok.kind != detail::Token::Kind::iriref)
                    throw ParseError("expected an object term", otok.line, otok.col);
                builder.add(subject, predicate, resolve(otok));
                auto sep = lexer.next();
                if (sep.kind == detail::Token::Kind::comma) continue;
                if (sep.kind == detail::Token::Kind::semicolon) {
                    tok = sep;
                    break;
                }
                if (sep.kind == detail::Token::Kind::dot) {
                    tok = sep;
                    break;
                }
                throw ParseError("expected ',', ';' or '.' after object", sep.line, sep.col);
            }
            if (tok.kind == detail::Token::Kind::dot) break;
        }
        tok = lexer.next();
    }
    return builder.build();
}

}  // namespace turtle
}  // namespace koneco
