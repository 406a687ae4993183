#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "koneco/error.hpp"
#include "koneco/kge.hpp"
#include "koneco/pipeline.hpp"
#include "koneco/ppml.hpp"
#include "koneco/predict.hpp"

namespace koneco {

// ---------------------------------------------------------------------------
// Ranking and regression metrics

inline double mrr(const std::vector<int>& ranks) {
    if (ranks.empty()) throw ArgumentError("mrr: empty rank list");
    double sum = 0.0;
    for (int r : ranks) {
        if (r < 1) throw ArgumentError("mrr: ranks must be >= 1");
        sum += 1.0 / r;
    }
    return sum / static_cast<double>(ranks.size());
}

inline double hits_at_n(const std::vector<int>& ranks, int n) {
    if (ranks.empty()) throw ArgumentError("hits_at_n: empty rank list");
    if (n < 1) throw ArgumentError("hits_at_n: n must be >= 1");
    std::size_t hits = 0;
    for (int r : ranks) {
        if (r < 1) throw ArgumentError("hits_at_n: ranks must be >= 1");
        if (r <= n) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double mse(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.empty() || y.size() != yhat.size())
        throw ArgumentError("mse: inputs must be nonempty and of equal length");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double d = y[i] - yhat[i];
        sum += d * d;
    }
    return sum / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Leave-one-out cross-validation

struct PipelineConfig {
    ModelKind kind = ModelKind::transe;
    TrainConfig train;
    GraphSpec graph;
    bool filtered = true;
    Strategy strategy = Strategy::top1;  // primary MSE decoding
    int top_k = 5;
    int threads = 0;  // fold-level parallelism; 0 = hardware concurrency
    std::uint64_t master_seed = 0;
};

struct FoldRow {
    std::string exporter, importer;
    int year = 0;
    bool cold_start = false;
    int rank = 0;
    std::size_t n_candidates = 0;
    double y = 0.0;
    double yhat_top1 = 0.0;
    double yhat_softmax = 0.0;
};

struct EvalReport {
    ModelKind kind = ModelKind::transe;
    std::size_t n_test = 0;  // folds attempted
    std::size_t cold_start_skips = 0;
    double mrr_value = 0.0;
    double hits1 = 0.0, hits10 = 0.0, hits100 = 0.0, hits1000 = 0.0;
    double mse_value = 0.0;     // under the configured primary strategy
    double mse_top1 = 0.0;
    double mse_softmax = 0.0;
    Strategy strategy = Strategy::top1;
    std::vector<FoldRow> folds;
    TrainConfig config;
    std::uint64_t seed = 0;
};

namespace detail {

inline void finalize_report(EvalReport& report) {
    std::vector<int> ranks;
    std::vector<double> y, top1, soft;
    for (const auto& f : report.folds) {
        if (f.cold_start) continue;
        ranks.push_back(f.rank);
        y.push_back(f.y);
        top1.push_back(f.yhat_top1);
        soft.push_back(f.yhat_softmax);
    }
    if (!ranks.empty()) {
        report.mrr_value = mrr(ranks);
        report.hits1 = hits_at_n(ranks, 1);
        report.hits10 = hits_at_n(ranks, 10);
        report.hits100 = hits_at_n(ranks, 100);
        report.hits1000 = hits_at_n(ranks, 1000);
        report.mse_top1 = mse(y, top1);
        report.mse_softmax = mse(y, soft);
        report.mse_value = report.strategy == Strategy::top1 ? report.mse_top1 : report.mse_softmax;
    }
}

}  // namespace detail

// Holds out each pair's trade-value fact in turn, retrains on the rest of the
// graph, and evaluates the filtered rank of the held-out bin plus the decoded
// value. Folds whose held-out bin entity vanishes from the training graph are
// skipped and counted as cold starts. Folds are independent and run in
// parallel; per-fold seeds make the report order-independent.
inline EvalReport loo_cv(const TradeTable& table, const PipelineConfig& cfg) {
    if (table.records.size() < 2) throw ArgumentError("loo_cv: need at least 2 pair keys");
    for (const auto& rec : table.records)
        if (!rec.trade) throw ArgumentError("loo_cv: record without trade value");

    EvalReport report;
    report.kind = cfg.kind;
    report.config = cfg.train;
    report.seed = cfg.master_seed;
    report.strategy = cfg.strategy;
    report.n_test = table.records.size();
    report.folds.resize(table.records.size());

    TripleSet full = build_graph(table, cfg.graph);

    auto run_fold = [&](std::size_t i) {
        const TradeRecord& rec = table.records[i];
        FoldRow row;
        row.exporter = rec.exporter;
        row.importer = rec.importer;
        row.year = rec.year;
        row.y = *rec.trade;

        ValueFact fact = value_fact_of(rec, cfg.graph);
        TripleSetBuilder builder;
        for (const auto& t : full.triples) {
            std::string s = full.entity_label(t.s);
            std::string p = full.relation_label(t.p);
            std::string o = full.entity_label(t.o);
            if (s == fact.pair && p == "hasTradeValue" && o == fact.bin) continue;
            builder.add(std::move(s), std::move(p), std::move(o));
        }
        Store store = build_index(builder.build(), cfg.graph.schemes);

        auto truth = store.graph.entity_id(fact.bin);
        auto subject = store.graph.entity_id(fact.pair);
        auto rel = store.graph.relation_id("hasTradeValue");
        if (!truth || !subject || !rel) {
            row.cold_start = true;  // the held-out fact was the entity's only mention
            report.folds[i] = std::move(row);
            return;
        }

        TrainConfig tc = cfg.train;
        tc.threads = 1;  // folds parallelize outside; keep each fold deterministic
        tc.seed = seed_for(cfg.master_seed, "fold:" + fact.pair);
        EmbeddingModel model = init_model(cfg.kind, tc.dim, store, tc.seed, tc.transe_norm);
        train(model, store, tc);

        auto ranked = rank_tails(model, store, *subject, *rel, cfg.filtered, truth);
        row.rank = *ranked.rank_of_truth;
        row.n_candidates = ranked.ranked.size();
        row.yhat_top1 =
            predict_value(model, store, *subject, cfg.graph.schemes, Strategy::top1, cfg.top_k).point;
        row.yhat_softmax =
            predict_value(model, store, *subject, cfg.graph.schemes, Strategy::softmax, cfg.top_k).point;
        report.folds[i] = std::move(row);
    };

    int threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < table.records.size(); ++i) run_fold(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= table.records.size()) return;
                    try {
                        run_fold(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        return;
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (const auto& f : report.folds)
        if (f.cold_start) ++report.cold_start_skips;
    detail::finalize_report(report);
    return report;
}

// ---------------------------------------------------------------------------
// Cross-model comparison against the PPML baseline

struct PpmlEval {
    double mse_value = 0.0;
    std::size_t n_test = 0;
    std::size_t cold_start_skips = 0;
    std::vector<double> y, yhat;
};

// Same split protocol as loo_cv: each record is held out once, PPML refits on
// the rest and predicts the held-out flow. Unseen fixed-effect levels are
// skipped and counted, mirroring the embedding side's cold-start convention.
inline PpmlEval loo_ppml(const TradeTable& table, const ppml::GravitySpec& spec) {
    if (table.records.size() < 2) throw ArgumentError("loo_ppml: need at least 2 records");
    PpmlEval eval;
    eval.n_test = table.records.size();
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        TradeTable train_table;
        train_table.records.reserve(table.records.size() - 1);
        for (std::size_t j = 0; j < table.records.size(); ++j)
            if (j != i) train_table.records.push_back(table.records[j]);
        detail::finalize(train_table);
        ppml::PpmlModel model = ppml::fit_gravity(train_table, spec);
        auto pred = ppml::predict_record(model, table.records[i]);
        if (!pred) {
            ++eval.cold_start_skips;
            continue;
        }
        eval.y.push_back(*table.records[i].trade);
        eval.yhat.push_back(*pred);
    }
    if (!eval.y.empty()) eval.mse_value = mse(eval.y, eval.yhat);
    return eval;
}

struct CompareReport {
    std::vector<EvalReport> models;
    PpmlEval ppml_eval;
    // ppml_mse / model_mse per model: how many times better than PPML.
    std::vector<double> mse_ratio_vs_ppml;
};

inline CompareReport compare_models(const TradeTable& table,
                                    const std::vector<PipelineConfig>& configs,
                                    const ppml::GravitySpec& ppml_spec) {
    if (configs.empty()) throw ArgumentError("compare_models: need at least one model config");
    CompareReport report;
    for (const auto& cfg : configs) report.models.push_back(loo_cv(table, cfg));
    report.ppml_eval = loo_ppml(table, ppml_spec);
    for (const auto& m : report.models)
        report.mse_ratio_vs_ppml.push_back(
            m.mse_value > 0 ? report.ppml_eval.mse_value / m.mse_value : 0.0);
    return report;
}

// ---------------------------------------------------------------------------
// Report rendering

inline std::string report_text(const EvalReport& r) {
    std::ostringstream out;
    char buf[256];
    out << "model: " << model_kind_name(r.kind) << "\n";
    out << "folds: " << r.n_test << " (cold-start skips: " << r.cold_start_skips << ")\n";
    std::snprintf(buf, sizeof(buf), "MRR        %.6f\n", r.mrr_value);
    out << buf;
    std::snprintf(buf, sizeof(buf), "Hits@1     %.6f\nHits@10    %.6f\nHits@100   %.6f\nHits@1000  %.6f\n",
                  r.hits1, r.hits10, r.hits100, r.hits1000);
    out << buf;
    std::snprintf(buf, sizeof(buf), "MSE(%s)  %.6f\nMSE(top1)  %.6f\nMSE(softmax)  %.6f\n",
                  std::string(strategy_name(r.strategy)).c_str(), r.mse_value, r.mse_top1,
                  r.mse_softmax);
    out << buf;
    return out.str();
}

inline std::string compare_text(const CompareReport& r) {
    std::ostringstream out;
    char buf[256];
    out << "model      MRR       Hits@1    Hits@10   MSE            vs PPML\n";
    for (std::size_t i = 0; i < r.models.size(); ++i) {
        const auto& m = r.models[i];
        std::snprintf(buf, sizeof(buf), "%-10s %-9.4f %-9.4f %-9.4f %-14.4f %.2fx\n",
                      std::string(model_kind_name(m.kind)).c_str(), m.mrr_value, m.hits1, m.hits10,
                      m.mse_value, r.mse_ratio_vs_ppml[i]);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-10s %-9s %-9s %-9s %-14.4f\n", "ppml", "-", "-", "-",
                  r.ppml_eval.mse_value);
    out << buf;
    return out.str();
}

// Plot-ready CSV: one row per fold with the rank (for rank histograms) and
// actual vs predicted values (for log-log scatter plots).
inline void write_plot_csv(std::ostream& out, const EvalReport& r) {
    out << "exporter,importer,year,cold_start,rank,n_candidates,y,yhat_top1,yhat_softmax\n";
    for (const auto& f : r.folds) {
        out << f.exporter << ',' << f.importer << ',' << f.year << ',' << (f.cold_start ? 1 : 0)
            << ',' << f.rank << ',' << f.n_candidates << ',' << format_double(f.y) << ','
            << format_double(f.yhat_top1) << ',' << format_double(f.yhat_softmax) << '\n';
    }
}

}  // namespace koneco
