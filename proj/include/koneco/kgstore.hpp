#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "koneco/error.hpp"
#include "koneco/semap.hpp"

namespace koneco {

// Immutable indexed triple store. Safe for shared concurrent reads; the
// (subject, predicate) index is the oracle for local closed-world checks.
struct Store {
    TripleSet graph;
    SchemeSet schemes;

    struct RelationInfo {
        std::vector<std::int32_t> subjects;  // sorted unique observed subjects
        std::vector<std::int32_t> objects;   // sorted unique observed objects
        std::optional<SchemeKind> value_scheme;  // set when every object is a value bin
    };
    std::vector<RelationInfo> relation_info;

    // (entity id, relation id) -> sorted true objects
    std::unordered_map<std::uint64_t, std::vector<std::int32_t>> sp_index;

    // Per scheme: observed bin entities, (bin index, entity id) sorted by index.
    std::map<SchemeKind, std::vector<std::pair<long, std::int32_t>>> scheme_bins;
    std::map<SchemeKind, std::int32_t> scheme_zero_bin;  // observed zero bins

    std::size_t n_entities() const { return graph.entities.size(); }
    std::size_t n_relations() const { return graph.relations.size(); }

    static std::uint64_t sp_key(std::int32_t s, std::int32_t p) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)) << 32) |
               static_cast<std::uint32_t>(p);
    }

    bool contains(std::int32_t s, std::int32_t p, std::int32_t o) const {
        auto it = sp_index.find(sp_key(s, p));
        if (it == sp_index.end()) return false;
        return std::binary_search(it->second.begin(), it->second.end(), o);
    }

    void check_entity(std::int32_t id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= n_entities())
            throw ArgumentError("unknown entity id " + std::to_string(id));
    }
    void check_relation(std::int32_t id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= n_relations())
            throw ArgumentError("unknown relation id " + std::to_string(id));
    }
};

inline Store build_index(const TripleSet& triples, const SchemeSet& schemes = {}) {
    Store store;
    store.graph = triples;
    store.schemes = schemes;
    store.relation_info.resize(triples.relations.size());

    // Bin entities observed anywhere in the graph, grouped by scheme.
    std::vector<std::optional<ValueBin>> entity_bins(triples.entities.size());
    for (std::size_t i = 0; i < triples.entities.size(); ++i) {
        entity_bins[i] = bin_from_label(triples.entities[i], schemes);
        if (entity_bins[i]) {
            auto id = static_cast<std::int32_t>(i);
            if (entity_bins[i]->zero) store.scheme_zero_bin[entity_bins[i]->kind] = id;
            else store.scheme_bins[entity_bins[i]->kind].push_back({entity_bins[i]->index, id});
        }
    }
    for (auto& [kind, bins] : store.scheme_bins) std::sort(bins.begin(), bins.end());

    for (const auto& t : store.graph.triples) {
        store.sp_index[Store::sp_key(t.s, t.p)].push_back(t.o);
        auto& info = store.relation_info[static_cast<std::size_t>(t.p)];
        info.subjects.push_back(t.s);
        info.objects.push_back(t.o);
    }
    for (auto& [key, objs] : store.sp_index) {
        std::sort(objs.begin(), objs.end());
        objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
    }
    for (std::size_t p = 0; p < store.relation_info.size(); ++p) {
        auto& info = store.relation_info[p];
        auto dedup = [](std::vector<std::int32_t>& v) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        };
        dedup(info.subjects);
        dedup(info.objects);
        // Tag the relation as value-typed when every observed object is a bin
        // entity of one scheme.
        std::optional<SchemeKind> kind;
        bool uniform = !info.objects.empty();
        for (auto o : info.objects) {
            const auto& bin = entity_bins[static_cast<std::size_t>(o)];
            if (!bin || (kind && *kind != bin->kind)) {
                uniform = false;
                break;
            }
            kind = bin->kind;
        }
        if (uniform) info.value_scheme = kind;
    }
    return store;
}

// Exactly the objects o with (s, p, o) in the store.
inline std::vector<std::int32_t> true_tails(const Store& store, std::int32_t s, std::int32_t p) {
    store.check_entity(s);
    store.check_relation(p);
    auto it = store.sp_index.find(Store::sp_key(s, p));
    if (it == store.sp_index.end()) return {};
    return it->second;
}

// Candidate tail entities for ranking and corruption, deterministic by label
// order. Type-constrained mode restricts value relations to the bins of their
// scheme (zero bin included); raw mode ranks every entity in the graph.
inline std::vector<std::int32_t> candidates(const Store& store, std::int32_t p,
                                            bool type_constrained = true) {
    store.check_relation(p);
    if (!type_constrained) {
        std::vector<std::int32_t> all(store.n_entities());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int32_t>(i);
        return all;
    }
    const auto& info = store.relation_info[static_cast<std::size_t>(p)];
    if (info.value_scheme) {
        std::vector<std::int32_t> ids;
        auto zit = store.scheme_zero_bin.find(*info.value_scheme);
        if (zit != store.scheme_zero_bin.end()) ids.push_back(zit->second);
        auto bit = store.scheme_bins.find(*info.value_scheme);
        if (bit != store.scheme_bins.end())
            for (const auto& [idx, id] : bit->second) ids.push_back(id);
        std::sort(ids.begin(), ids.end());  // id order = label order
        return ids;
    }
    return info.objects;
}

}  // namespace koneco
