#pragma once

#include <string>

#include "koneco/corpus.hpp"
#include "koneco/kgstore.hpp"
#include "koneco/semap.hpp"

namespace koneco {

// Shared wiring: table -> triples -> indexed store under the default
// vocabulary, schemes and rules (all overridable).
struct GraphSpec {
    Vocabulary vocab = default_vocabulary();
    SchemeSet schemes = default_schemes();
    MappingRuleSet rules = default_rules();
};

inline TripleSet build_graph(const TradeTable& table, const GraphSpec& spec = {},
                             MapReport* report = nullptr) {
    return apply_mapping(table, spec.rules, spec.vocab, spec.schemes, report);
}

inline Store build_store(const TradeTable& table, const GraphSpec& spec = {},
                         MapReport* report = nullptr) {
    return build_index(build_graph(table, spec, report), spec.schemes);
}

// The value fact a record contributes, as labels.
struct ValueFact {
    std::string pair;
    std::string bin;
};

inline ValueFact value_fact_of(const TradeRecord& rec, const GraphSpec& spec) {
    if (!rec.trade) throw ArgumentError("value_fact_of: record has no trade value");
    return {detail::render_subject(spec.rules.subject_template, rec),
            bin_value(*rec.trade, spec.schemes.trade).label};
}

}  // namespace koneco
