#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "koneco/corpus.hpp"
#include "koneco/error.hpp"

namespace koneco {

// ---------------------------------------------------------------------------
// Vocabulary

struct Vocabulary {
    std::string base_iri = "http://www.koneco.de/kg#";
    std::vector<std::string> classes = {"Country", "TradeRelation"};
    std::vector<std::string> data_relations = {
        "hasTradeValue", "hasDistance", "hasTradeAgreement", "hasGDP_WDI",
        "hasGDP_PWT",    "hasPopulation", "hasLatitude",     "hasLongitude"};
    std::vector<std::string> object_relations = {"tradesWith", "hasExporter", "hasImporter"};

    bool has_relation(std::string_view name) const {
        auto in = [&](const std::vector<std::string>& v) {
            return std::find(v.begin(), v.end(), name) != v.end();
        };
        return in(data_relations) || in(object_relations);
    }

    void validate() const {
        if (base_iri.empty() || (base_iri.back() != '/' && base_iri.back() != '#'))
            throw ArgumentError("vocabulary base IRI must end in '/' or '#'");
        std::set<std::string> seen;
        for (const auto& v : {data_relations, object_relations})
            for (const auto& r : v)
                if (!seen.insert(r).second)
                    throw ArgumentError("duplicate relation name in vocabulary: " + r);
    }
};

inline Vocabulary default_vocabulary() { return Vocabulary{}; }

// ---------------------------------------------------------------------------
// Value discretization

enum class SchemeKind { trade, distance, gdp, population, coordinate };

inline std::string_view scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::trade: return "trade";
        case SchemeKind::distance: return "distance";
        case SchemeKind::gdp: return "gdp";
        case SchemeKind::population: return "population";
        case SchemeKind::coordinate: return "coordinate";
    }
    return "?";
}

// Half-open log10 bins [10^(i*w), 10^((i+1)*w)) for money-like quantities;
// coordinates are rounded to whole-degree entities instead.
struct ValueScheme {
    SchemeKind kind = SchemeKind::trade;
    double bin_width = 0.1;  // decades; must be a whole number of centidecades
};

struct SchemeSet {
    ValueScheme trade{SchemeKind::trade, 0.1};
    ValueScheme distance{SchemeKind::distance, 0.25};
    ValueScheme gdp{SchemeKind::gdp, 0.25};
    ValueScheme population{SchemeKind::population, 0.25};
    ValueScheme coordinate{SchemeKind::coordinate, 1.0};

    const ValueScheme& of(SchemeKind k) const {
        switch (k) {
            case SchemeKind::trade: return trade;
            case SchemeKind::distance: return distance;
            case SchemeKind::gdp: return gdp;
            case SchemeKind::population: return population;
            case SchemeKind::coordinate: return coordinate;
        }
        throw ArgumentError("unknown scheme kind");
    }
};

inline SchemeSet default_schemes() { return SchemeSet{}; }

struct ValueBin {
    SchemeKind kind = SchemeKind::trade;
    long index = 0;
    bool zero = false;
    std::string label;
    double representative = 0.0;
};

namespace detail {

inline long centidecades(const ValueScheme& s) {
    auto c = std::llround(s.bin_width * 100.0);
    if (c < 1 || std::fabs(s.bin_width * 100.0 - static_cast<double>(c)) > 1e-9)
        throw ArgumentError("bin width must be a positive whole number of centidecades");
    return static_cast<long>(c);
}

inline std::string bin_label(SchemeKind kind, long index, const ValueScheme& s) {
    long lo_centi = index * centidecades(s);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "VB_%s_%c%04ld", std::string(scheme_name(kind)).c_str(),
                  lo_centi < 0 ? 'm' : 'p', std::labs(lo_centi));
    return buf;
}

inline std::string zero_label(SchemeKind kind) {
    return "VB_" + std::string(scheme_name(kind)) + "_zero";
}

inline std::string degree_label(long index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "DEG_%c%03ld", index < 0 ? 'm' : 'p', std::labs(index));
    return buf;
}

}  // namespace detail

// Maps a nonnegative money-like value to its log10 bin. Zero gets the
// dedicated zero bin; the representative is the geometric bin midpoint.
inline ValueBin bin_value(double value, const ValueScheme& scheme) {
    if (scheme.kind == SchemeKind::coordinate)
        throw ArgumentError("bin_value: coordinates use degree_bin");
    if (!std::isfinite(value) || value < 0)
        throw ArgumentError("bin_value: value must be finite and >= 0");
    ValueBin bin;
    bin.kind = scheme.kind;
    if (value == 0) {
        bin.zero = true;
        bin.label = detail::zero_label(scheme.kind);
        bin.representative = 0.0;
        return bin;
    }
    const double w = scheme.bin_width;
    auto idx = static_cast<long>(std::floor(std::log10(value) / w));
    // log10 rounding can land one bin off near boundaries; the half-open
    // tiling [10^(i*w), 10^((i+1)*w)) is enforced directly.
    while (value < std::pow(10.0, static_cast<double>(idx) * w)) --idx;
    while (value >= std::pow(10.0, static_cast<double>(idx + 1) * w)) ++idx;
    bin.index = idx;
    bin.label = detail::bin_label(scheme.kind, idx, scheme);
    bin.representative = std::pow(10.0, w * (static_cast<double>(idx) + 0.5));
    return bin;
}

inline ValueBin bin_at_index(long index, const ValueScheme& scheme) {
    ValueBin bin;
    bin.kind = scheme.kind;
    bin.index = index;
    bin.label = detail::bin_label(scheme.kind, index, scheme);
    bin.representative = std::pow(10.0, scheme.bin_width * (static_cast<double>(index) + 0.5));
    return bin;
}

inline ValueBin zero_bin(const ValueScheme& scheme) {
    ValueBin bin;
    bin.kind = scheme.kind;
    bin.zero = true;
    bin.label = detail::zero_label(scheme.kind);
    bin.representative = 0.0;
    return bin;
}

// Coordinates become shared whole-degree entities.
inline ValueBin degree_bin(double degrees, const ValueScheme& scheme) {
    if (scheme.kind != SchemeKind::coordinate)
        throw ArgumentError("degree_bin: scheme must be the coordinate scheme");
    if (!std::isfinite(degrees) || degrees < -180.0 || degrees > 180.0)
        throw ArgumentError("degree_bin: degrees outside [-180, 180]");
    ValueBin bin;
    bin.kind = SchemeKind::coordinate;
    bin.index = std::lround(degrees / scheme.bin_width);
    bin.label = detail::degree_label(bin.index);
    bin.representative = static_cast<double>(bin.index) * scheme.bin_width;
    return bin;
}

// Decodes a bin entity label back into a ValueBin; nullopt when the label is
// not a bin label of the given scheme set.
inline std::optional<ValueBin> bin_from_label(std::string_view label, const SchemeSet& schemes) {
    auto parse_signed = [](std::string_view body, int digits) -> std::optional<long> {
        if (body.size() != static_cast<std::size_t>(digits + 1)) return std::nullopt;
        char sign = body[0];
        if (sign != 'p' && sign != 'm') return std::nullopt;
        long v = 0;
        for (char c : body.substr(1)) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return sign == 'm' ? -v : v;
    };
    if (label.starts_with("DEG_")) {
        auto idx = parse_signed(label.substr(4), 3);
        if (!idx) return std::nullopt;
        ValueBin bin;
        bin.kind = SchemeKind::coordinate;
        bin.index = *idx;
        bin.label = std::string(label);
        bin.representative = static_cast<double>(*idx) * schemes.coordinate.bin_width;
        return bin;
    }
    if (!label.starts_with("VB_")) return std::nullopt;
    for (SchemeKind kind : {SchemeKind::trade, SchemeKind::distance, SchemeKind::gdp, SchemeKind::population}) {
        const auto& scheme = schemes.of(kind);
        std::string prefix = "VB_" + std::string(scheme_name(kind)) + "_";
        if (!label.starts_with(prefix)) continue;
        auto rest = label.substr(prefix.size());
        if (rest == "zero") return zero_bin(scheme);
        auto centi = parse_signed(rest, 4);
        if (!centi) return std::nullopt;
        long per_bin = detail::centidecades(scheme);
        if (*centi % per_bin != 0) return std::nullopt;
        return bin_at_index(*centi / per_bin, scheme);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Triples

struct Triple {
    std::int32_t s = 0;
    std::int32_t p = 0;
    std::int32_t o = 0;
    auto operator<=>(const Triple&) const = default;
};

// Canonical triple set: dictionaries are label-sorted, ids are dense, and the
// triple list is sorted and duplicate-free. Equal graphs compare equal
// regardless of construction order.
struct TripleSet {
    std::vector<std::string> entities;   // label-sorted; index = entity id
    std::vector<std::string> relations;  // label-sorted; index = relation id
    std::vector<Triple> triples;         // sorted, unique

    bool operator==(const TripleSet&) const = default;

    std::size_t size() const { return triples.size(); }

    std::optional<std::int32_t> entity_id(std::string_view label) const {
        auto it = std::lower_bound(entities.begin(), entities.end(), label);
        if (it == entities.end() || *it != label) return std::nullopt;
        return static_cast<std::int32_t>(it - entities.begin());
    }

    std::optional<std::int32_t> relation_id(std::string_view label) const {
        auto it = std::lower_bound(relations.begin(), relations.end(), label);
        if (it == relations.end() || *it != label) return std::nullopt;
        return static_cast<std::int32_t>(it - relations.begin());
    }

    const std::string& entity_label(std::int32_t id) const {
        return entities.at(static_cast<std::size_t>(id));
    }
    const std::string& relation_label(std::int32_t id) const {
        return relations.at(static_cast<std::size_t>(id));
    }
};

class TripleSetBuilder {
  public:
    void add(std::string s, std::string p, std::string o) {
        facts_.insert({std::move(s), std::move(p), std::move(o)});
    }

    bool remove(const std::string& s, const std::string& p, const std::string& o) {
        return facts_.erase({s, p, o}) > 0;
    }

    std::size_t size() const { return facts_.size(); }

    TripleSet build() const {
        TripleSet ts;
        std::set<std::string> ents, rels;
        for (const auto& f : facts_) {
            ents.insert(f[0]);
            rels.insert(f[1]);
            ents.insert(f[2]);
        }
        ts.entities.assign(ents.begin(), ents.end());
        ts.relations.assign(rels.begin(), rels.end());
        ts.triples.reserve(facts_.size());
        for (const auto& f : facts_)
            ts.triples.push_back({*ts.entity_id(f[0]), *ts.relation_id(f[1]), *ts.entity_id(f[2])});
        std::sort(ts.triples.begin(), ts.triples.end());
        return ts;
    }

  private:
    std::set<std::array<std::string, 3>> facts_;
};

// ---------------------------------------------------------------------------
// Mapping rules

enum class SubjectSel { pair, exporter, importer };
enum class TargetKind { entity_ref, binned, boolean_entity };

struct PredicateObjectMap {
    SubjectSel on = SubjectSel::pair;
    std::string predicate;
    std::string source_field;
    TargetKind kind = TargetKind::binned;
    SchemeKind scheme = SchemeKind::trade;  // meaningful only for binned
};

struct MappingRuleSet {
    std::string subject_template = "{exporter}_{importer}_{year}";
    std::vector<PredicateObjectMap> maps;
};

// Built-in rule set covering every feature of the record: pair-level trade,
// distance and agreement, country-level GDPs, population and coordinates.
inline MappingRuleSet default_rules() {
    MappingRuleSet r;
    using S = SubjectSel;
    using T = TargetKind;
    using K = SchemeKind;
    r.maps = {
        {S::pair, "hasTradeValue", "trade", T::binned, K::trade},
        {S::pair, "hasDistance", "dist", T::binned, K::distance},
        {S::pair, "hasTradeAgreement", "agree", T::boolean_entity, K::trade},
        {S::exporter, "hasGDP_WDI", "gdp_wdi_o", T::binned, K::gdp},
        {S::importer, "hasGDP_WDI", "gdp_wdi_d", T::binned, K::gdp},
        {S::exporter, "hasGDP_PWT", "gdp_pwt_o", T::binned, K::gdp},
        {S::importer, "hasGDP_PWT", "gdp_pwt_d", T::binned, K::gdp},
        {S::exporter, "hasPopulation", "pop_o", T::binned, K::population},
        {S::importer, "hasPopulation", "pop_d", T::binned, K::population},
        {S::exporter, "hasLatitude", "lat_o", T::binned, K::coordinate},
        {S::importer, "hasLatitude", "lat_d", T::binned, K::coordinate},
        {S::exporter, "hasLongitude", "lng_o", T::binned, K::coordinate},
        {S::importer, "hasLongitude", "lng_d", T::binned, K::coordinate},
    };
    return r;
}

// Rules file dialect, one rule per line:
//   subject {exporter}_{importer}_{year}
//   map <pair|exporter|importer> <predicate> <source-field> \
//       <entity|boolean|binned:trade|binned:distance|binned:gdp|binned:population|binned:coordinate>
inline MappingRuleSet parse_rules(std::string_view text) {
    MappingRuleSet rules;
    rules.maps.clear();
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto toks = tokens(line);
        auto fail = [&](const std::string& msg) {
            throw MappingError("rules line " + std::to_string(line_no) + ": " + msg);
        };
        if (toks[0] == "subject") {
            if (toks.size() != 2) fail("expected: subject <template>");
            rules.subject_template = toks[1];
            continue;
        }
        if (toks[0] != "map") fail("expected 'subject' or 'map', got '" + toks[0] + "'");
        if (toks.size() != 5) fail("expected: map <on> <predicate> <field> <kind>");
        PredicateObjectMap m;
        if (toks[1] == "pair") m.on = SubjectSel::pair;
        else if (toks[1] == "exporter") m.on = SubjectSel::exporter;
        else if (toks[1] == "importer") m.on = SubjectSel::importer;
        else fail("unknown subject selector '" + toks[1] + "'");
        m.predicate = toks[2];
        m.source_field = toks[3];
        const std::string& kind = toks[4];
        if (kind == "entity") m.kind = TargetKind::entity_ref;
        else if (kind == "boolean") m.kind = TargetKind::boolean_entity;
        else if (kind.starts_with("binned:")) {
            m.kind = TargetKind::binned;
            std::string s = kind.substr(7);
            if (s == "trade") m.scheme = SchemeKind::trade;
            else if (s == "distance") m.scheme = SchemeKind::distance;
            else if (s == "gdp") m.scheme = SchemeKind::gdp;
            else if (s == "population") m.scheme = SchemeKind::population;
            else if (s == "coordinate") m.scheme = SchemeKind::coordinate;
            else fail("unknown scheme '" + s + "'");
        } else {
            fail("unknown target kind '" + kind + "'");
        }
        rules.maps.push_back(std::move(m));
    }
    return rules;
}

namespace detail {

inline void check_template(const std::string& tmpl) {
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] != '{') {
            ++i;
            continue;
        }
        auto close = tmpl.find('}', i);
        if (close == std::string::npos)
            throw MappingError("subject template has unterminated '{' in: " + tmpl);
        std::string name = tmpl.substr(i + 1, close - i - 1);
        if (name != "exporter" && name != "importer" && name != "year")
            throw MappingError("subject template references unknown field '" + name + "'");
        i = close + 1;
    }
}

inline std::string render_subject(const std::string& tmpl, const TradeRecord& r) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] != '{') {
            out.push_back(tmpl[i++]);
            continue;
        }
        auto close = tmpl.find('}', i);
        std::string name = tmpl.substr(i + 1, close - i - 1);
        if (name == "exporter") out += r.exporter;
        else if (name == "importer") out += r.importer;
        else out += std::to_string(r.year);
        i = close + 1;
    }
    return out;
}

}  // namespace detail

inline void validate_rules(const MappingRuleSet& rules, const Vocabulary& vocab) {
    detail::check_template(rules.subject_template);
    const auto& cols = canonical_columns();
    for (const auto& m : rules.maps) {
        if (!vocab.has_relation(m.predicate))
            throw MappingError("rule for predicate '" + m.predicate + "' not in vocabulary");
        if (std::find(cols.begin(), cols.end(), m.source_field) == cols.end())
            throw MappingError("rule for predicate '" + m.predicate +
                               "' references unknown field '" + m.source_field + "'");
        if (m.kind == TargetKind::entity_ref && m.source_field != "exporter" &&
            m.source_field != "importer")
            throw MappingError("rule for predicate '" + m.predicate +
                               "': entity targets require a country-code field");
        if (m.kind == TargetKind::boolean_entity && m.source_field != "agree")
            throw MappingError("rule for predicate '" + m.predicate +
                               "': boolean targets require the agree field");
    }
}

struct MapReport {
    std::size_t records_mapped = 0;
    std::size_t skipped_absent_trade = 0;
};

// Emits, per record: the pair node, the tradesWith link between the country
// entities, hasExporter/hasImporter links from the pair node, and one triple
// per predicate-object map. Output is deduplicated and order-independent.
inline TripleSet apply_mapping(const TradeTable& table, const MappingRuleSet& rules,
                               const Vocabulary& vocab, const SchemeSet& schemes,
                               MapReport* report_out = nullptr) {
    if (table.records.empty()) throw ArgumentError("apply_mapping: empty table");
    validate_rules(rules, vocab);
    MapReport report;
    TripleSetBuilder builder;
    for (const auto& rec : table.records) {
        if (!rec.trade) {
            ++report.skipped_absent_trade;
            continue;
        }
        std::string pair = detail::render_subject(rules.subject_template, rec);
        builder.add(rec.exporter, "tradesWith", rec.importer);
        builder.add(pair, "hasExporter", rec.exporter);
        builder.add(pair, "hasImporter", rec.importer);
        for (const auto& m : rules.maps) {
            const std::string& subject = m.on == SubjectSel::pair ? pair
                                         : m.on == SubjectSel::exporter ? rec.exporter
                                                                        : rec.importer;
            if (m.kind == TargetKind::entity_ref) {
                builder.add(subject, m.predicate,
                            m.source_field == "exporter" ? rec.exporter : rec.importer);
                continue;
            }
            if (m.kind == TargetKind::boolean_entity) {
                if (!rec.agreement) continue;  // absent optional: no triple
                builder.add(subject, m.predicate, *rec.agreement ? "AGREE_TRUE" : "AGREE_FALSE");
                continue;
            }
            auto value = detail::numeric_field(rec, m.source_field);
            if (!value) continue;
            const auto& scheme = schemes.of(m.scheme);
            ValueBin bin = m.scheme == SchemeKind::coordinate ? degree_bin(*value, scheme)
                                                              : bin_value(*value, scheme);
            builder.add(subject, m.predicate, bin.label);
        }
        ++report.records_mapped;
    }
    if (report_out) *report_out = report;
    return builder.build();
}

// ---------------------------------------------------------------------------
// Graph validation

struct Violation {
    enum class Kind { unknown_predicate, dangling_id, missing_exporter_link, missing_importer_link };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::map<std::string, std::size_t> relation_counts;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_graph(const TripleSet& ts, const Vocabulary& vocab) {
    ValidationReport report;
    auto n_ent = static_cast<std::int32_t>(ts.entities.size());
    auto n_rel = static_cast<std::int32_t>(ts.relations.size());
    for (std::size_t i = 0; i < ts.relations.size(); ++i) {
        if (!vocab.has_relation(ts.relations[i]))
            report.violations.push_back({Violation::Kind::unknown_predicate,
                                         "unknown predicate: " + ts.relations[i]});
    }
    std::set<std::int32_t> pair_nodes, has_exp, has_imp;
    const std::set<std::string> pair_scoped = {"hasExporter", "hasImporter", "hasTradeValue",
                                               "hasDistance", "hasTradeAgreement"};
    for (const auto& t : ts.triples) {
        if (t.s < 0 || t.s >= n_ent || t.o < 0 || t.o >= n_ent || t.p < 0 || t.p >= n_rel) {
            report.violations.push_back({Violation::Kind::dangling_id,
                                         "triple references an id outside the dictionaries"});
            continue;
        }
        const std::string& rel = ts.relations[static_cast<std::size_t>(t.p)];
        ++report.relation_counts[rel];
        if (pair_scoped.count(rel)) pair_nodes.insert(t.s);
        if (rel == "hasExporter") has_exp.insert(t.s);
        if (rel == "hasImporter") has_imp.insert(t.s);
    }
    for (auto node : pair_nodes) {
        const std::string& label = ts.entities[static_cast<std::size_t>(node)];
        if (!has_exp.count(node))
            report.violations.push_back({Violation::Kind::missing_exporter_link,
                                         "pair node missing hasExporter link: " + label});
        if (!has_imp.count(node))
            report.violations.push_back({Violation::Kind::missing_importer_link,
                                         "pair node missing hasImporter link: " + label});
    }
    return report;
}

}  // namespace koneco
