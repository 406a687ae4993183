#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "koneco/error.hpp"
#include "koneco/kge.hpp"
#include "koneco/kgstore.hpp"

namespace koneco {

struct RankedTails {
    std::int32_t subject = 0;
    std::int32_t predicate = 0;
    // Candidates sorted by non-increasing score; ties ordered by entity id.
    std::vector<std::pair<std::int32_t, double>> ranked;
    // 1-based pessimistic rank of the supplied truth (worst rank among ties).
    std::optional<int> rank_of_truth;
};

// Scores every candidate tail for (s, p, ?). Filtered mode removes the other
// known-true tails before ranking, keeping the evaluation target.
inline RankedTails rank_tails(const EmbeddingModel& model, const Store& store, std::int32_t s,
                              std::int32_t p, bool filtered,
                              std::optional<std::int32_t> truth = std::nullopt,
                              bool type_constrained = true) {
    store.check_entity(s);
    store.check_relation(p);
    auto cands = candidates(store, p, type_constrained);
    if (truth && !std::binary_search(cands.begin(), cands.end(), *truth)) {
        cands.push_back(*truth);
        std::sort(cands.begin(), cands.end());
    }
    if (filtered) {
        auto truths = true_tails(store, s, p);
        std::erase_if(cands, [&](std::int32_t c) {
            if (truth && c == *truth) return false;
            return std::binary_search(truths.begin(), truths.end(), c);
        });
    }
    if (cands.empty()) throw PredictionError("rank_tails: empty candidate set");

    RankedTails result;
    result.subject = s;
    result.predicate = p;
    result.ranked.reserve(cands.size());
    for (auto c : cands) result.ranked.push_back({c, score(model, {s, p, c})});
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const auto& a, const auto& b) {
                         if (a.second != b.second) return a.second > b.second;
                         return a.first < b.first;
                     });
    if (truth) {
        double s_true = 0.0;
        bool found = false;
        for (const auto& [c, sc] : result.ranked)
            if (c == *truth) {
                s_true = sc;
                found = true;
                break;
            }
        if (!found) throw PredictionError("rank_tails: truth filtered out of the candidate set");
        int rank = 0;
        for (const auto& [c, sc] : result.ranked)
            if (sc >= s_true) ++rank;  // pessimistic: every tie counts against
        result.rank_of_truth = rank;
    }
    return result;
}

enum class Strategy { top1, softmax };

inline std::string_view strategy_name(Strategy s) {
    return s == Strategy::top1 ? "top1" : "softmax";
}

struct ValuePrediction {
    double point = 0.0;  // millions of USD
    Strategy strategy = Strategy::top1;
    double confidence = 0.0;  // normalized weight of the best bin
    std::int32_t best_bin = 0;
};

// Decodes the ranked value-bin list into a monetary prediction. top1 takes the
// best bin's representative; softmax averages the top-k representatives under
// softmax(score) weights at temperature 1.
inline ValuePrediction predict_value(const EmbeddingModel& model, const Store& store,
                                     std::int32_t s, const SchemeSet& schemes, Strategy strategy,
                                     int k = 5) {
    auto rel = store.graph.relation_id("hasTradeValue");
    if (!rel) throw PredictionError("predict_value: graph has no hasTradeValue relation");
    auto ranked = rank_tails(model, store, s, *rel, /*filtered=*/false);
    auto top = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, k)), ranked.ranked.size());

    double max_score = ranked.ranked.front().second;
    double weight_sum = 0.0;
    std::vector<double> weights(top);
    for (std::size_t i = 0; i < top; ++i) {
        weights[i] = std::exp(ranked.ranked[i].second - max_score);
        weight_sum += weights[i];
    }
    for (auto& w : weights) w /= weight_sum;

    ValuePrediction out;
    out.strategy = strategy;
    out.best_bin = ranked.ranked.front().first;
    out.confidence = weights[0];
    auto representative = [&](std::int32_t id) {
        auto bin = bin_from_label(store.graph.entity_label(id), schemes);
        if (!bin) throw PredictionError("predict_value: candidate '" +
                                        store.graph.entity_label(id) + "' is not a value bin");
        return bin->representative;
    };
    if (strategy == Strategy::top1) {
        out.point = representative(out.best_bin);
    } else {
        double point = 0.0;
        for (std::size_t i = 0; i < top; ++i)
            point += weights[i] * representative(ranked.ranked[i].first);
        out.point = point;
    }
    return out;
}

}  // namespace koneco
