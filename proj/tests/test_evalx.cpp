#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "koneco/evalx.hpp"
#include "oracles.hpp"

using namespace koneco;

namespace {

TradeTable toy_pairs_table(int n_pairs) {
    // n_pairs directed pairs over a small country pool, values spread across bins.
    TradeTable t;
    const char* codes[] = {"AAA", "BBB", "CCC", "DDD"};
    int k = 0;
    for (int i = 0; i < 4 && k < n_pairs; ++i)
        for (int j = 0; j < 4 && k < n_pairs; ++j) {
            if (i == j) continue;
            TradeRecord r;
            r.exporter = codes[i];
            r.importer = codes[j];
            r.year = 2000;
            r.trade = std::pow(10.0, k);  // distinct decades
            r.distance = 1000.0 + 100.0 * k;
            r.agreement = (k % 2) == 0;
            t.records.push_back(r);
            ++k;
        }
    detail::finalize(t);
    return t;
}

TrainConfig light_train(int epochs = 60, int dim = 12) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.dim = dim;
    cfg.corruptions = 4;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.05;
    return cfg;
}

}  // namespace

TEST_CASE("mrr: direct formula examples") {
    REQUIRE(mrr({1, 2, 4}) == Catch::Approx(0.5833333333333334).margin(1e-12));
    REQUIRE(mrr({1, 1, 1}) == 1.0);
    REQUIRE(mrr({7}) == Catch::Approx(1.0 / 7).epsilon(1e-15));
    REQUIRE_THROWS_AS(mrr({}), ArgumentError);
    REQUIRE_THROWS_AS(mrr({0}), ArgumentError);
}

TEST_CASE("hits_at_n: examples and monotonicity in N") {
    REQUIRE(hits_at_n({1, 3, 12}, 10) == Catch::Approx(2.0 / 3));
    REQUIRE(hits_at_n({1, 3, 12}, 1) == Catch::Approx(1.0 / 3));
    REQUIRE_THROWS_AS(hits_at_n({}, 5), ArgumentError);
    REQUIRE_THROWS_AS(hits_at_n({1}, 0), ArgumentError);

    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> ranks;
        for (int i = 0; i < 20; ++i) ranks.push_back(1 + static_cast<int>(rng.below(500)));
        double h1 = hits_at_n(ranks, 1);
        double h10 = hits_at_n(ranks, 10);
        double h100 = hits_at_n(ranks, 100);
        REQUIRE(h1 <= h10);
        REQUIRE(h10 <= h100);
    }
}

TEST_CASE("mse: identity, direct formula, length mismatch") {
    REQUIRE(mse({1, 2, 3}, {1, 2, 3}) == 0.0);
    REQUIRE(mse({2, 4}, {1, 6}) == Catch::Approx(2.5));
    REQUIRE_THROWS_AS(mse({1}, {1, 2}), ArgumentError);
    REQUIRE_THROWS_AS(mse({}, {}), ArgumentError);
}

TEST_CASE("metrics agree with the exhaustive-scoring oracle on random graphs") {
    Rng rng(2024);
    for (int g = 0; g < 50; ++g) {
        auto ts = oracle::random_triple_set(rng, 60);
        auto store = build_index(ts);
        auto model = init_model(ModelKind::distmult, 4, store, 1000 + g);

        std::vector<int> ranks, oracle_ranks;
        for (const auto& t : store.graph.triples) {
            auto cands = candidates(store, t.p);
            std::vector<double> scores;
            std::size_t truth_idx = 0;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                scores.push_back(oracle::score(model, t.s, t.p, cands[i]));
                if (cands[i] == t.o) truth_idx = i;
            }
            oracle_ranks.push_back(oracle::pessimistic_rank(scores, truth_idx));
            ranks.push_back(*rank_tails(model, store, t.s, t.p, false, t.o).rank_of_truth);
        }
        REQUIRE(ranks == oracle_ranks);
        REQUIRE(mrr(ranks) == Catch::Approx(mrr(oracle_ranks)).epsilon(1e-15));
        for (int n : {1, 10, 100})
            REQUIRE(hits_at_n(ranks, n) == hits_at_n(oracle_ranks, n));
    }
}

TEST_CASE("loo_cv: three-pair toy table yields exactly three folds") {
    auto table = toy_pairs_table(3);
    for (auto& r : table.records) r.trade = 5.0;  // shared bin: no cold starts
    detail::finalize(table);
    PipelineConfig cfg;
    cfg.train = light_train(40, 8);
    cfg.master_seed = 5;
    cfg.threads = 2;
    auto report = loo_cv(table, cfg);
    REQUIRE(report.n_test == 3);
    REQUIRE(report.folds.size() == 3);
    // Every pair appears as test exactly once.
    std::set<std::string> keys;
    for (const auto& f : report.folds) keys.insert(f.exporter + "_" + f.importer);
    REQUIRE(keys.size() == 3);
    REQUIRE(report.cold_start_skips == 0);
    for (const auto& f : report.folds) REQUIRE(f.rank >= 1);
}

TEST_CASE("loo_cv: deterministic report for a fixed master seed") {
    auto table = toy_pairs_table(4);
    PipelineConfig cfg;
    cfg.train = light_train(30, 8);
    cfg.master_seed = 11;
    cfg.threads = 3;  // fold parallelism must not affect results
    auto a = loo_cv(table, cfg);
    cfg.threads = 1;
    auto b = loo_cv(table, cfg);
    REQUIRE(a.mrr_value == b.mrr_value);
    REQUIRE(a.mse_top1 == b.mse_top1);
    REQUIRE(a.mse_softmax == b.mse_softmax);
    for (std::size_t i = 0; i < a.folds.size(); ++i) {
        REQUIRE(a.folds[i].rank == b.folds[i].rank);
        REQUIRE(a.folds[i].yhat_top1 == b.folds[i].yhat_top1);
    }
}

TEST_CASE("loo_cv: cold-start folds are skipped and counted") {
    // Unique-bin values: holding one out removes its bin entity entirely.
    auto table = toy_pairs_table(3);
    PipelineConfig cfg;
    cfg.train = light_train(20, 6);
    cfg.master_seed = 2;
    auto report = loo_cv(table, cfg);
    // Distances share bins across records but every trade bin is unique, so
    // every fold is a cold start by construction.
    REQUIRE(report.cold_start_skips == 3);

    // Shared-bin values never cold start.
    TradeTable shared = table;
    for (auto& r : shared.records) r.trade = 5.0;
    detail::finalize(shared);
    auto report2 = loo_cv(shared, cfg);
    REQUIRE(report2.cold_start_skips == 0);
    REQUIRE(report2.mrr_value > 0.0);
}

TEST_CASE("loo_cv: mean fold MRR beats the random-ranking baseline by 5x") {
    SynthParams params;
    params.n_countries = 20;
    params.noise = 0.3;
    params.zero_frac = 0.35;
    params.seed = 13;
    auto table = synth_generate(params);

    PipelineConfig cfg;
    cfg.train = light_train(100, 24);
    cfg.train.corruptions = 4;
    cfg.train.batch_size = 64;
    cfg.train.learning_rate = 0.05;
    cfg.train.margin = 0.5;
    cfg.master_seed = 33;
    auto report = loo_cv(table, cfg);

    double baseline = 0.0;
    std::size_t counted = 0;
    for (const auto& f : report.folds) {
        if (f.cold_start) continue;
        baseline += oracle::random_mrr_baseline(f.n_candidates);
        ++counted;
    }
    baseline /= static_cast<double>(counted);
    INFO("mrr=" << report.mrr_value << " baseline=" << baseline
                << " cold=" << report.cold_start_skips);
    REQUIRE(report.mrr_value >= 5.0 * baseline);
}

TEST_CASE("compare_models: report structure, determinism and the MSE ratio row") {
    auto table = toy_pairs_table(6);
    for (auto& r : table.records) r.trade = 5.0 + (r.year % 3);  // shared bins
    detail::finalize(table);

    PipelineConfig cfg;
    cfg.train = light_train(30, 8);
    cfg.master_seed = 4;
    ppml::GravitySpec spec;
    spec.fe_exporter = false;
    spec.fe_importer = false;

    auto report = compare_models(table, {cfg, cfg}, spec);
    REQUIRE(report.models.size() == 2);
    REQUIRE(report.mse_ratio_vs_ppml.size() == 2);
    REQUIRE(report.ppml_eval.n_test == table.records.size());
    // Identical configs and seeds give identical metric rows.
    REQUIRE(report.models[0].mrr_value == report.models[1].mrr_value);
    REQUIRE(report.models[0].mse_value == report.models[1].mse_value);
    if (report.models[0].mse_value > 0)
        REQUIRE(report.mse_ratio_vs_ppml[0] ==
                Catch::Approx(report.ppml_eval.mse_value / report.models[0].mse_value));

    REQUIRE_THROWS_AS(compare_models(table, {}, spec), ArgumentError);

    auto text = compare_text(report);
    REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("ppml"));
    REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("vs PPML"));
}

TEST_CASE("report rendering: text and plot CSV carry the fold data") {
    auto table = toy_pairs_table(3);
    for (auto& r : table.records) r.trade = 7.0;
    detail::finalize(table);
    PipelineConfig cfg;
    cfg.train = light_train(20, 6);
    auto report = loo_cv(table, cfg);
    auto text = report_text(report);
    REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("MRR"));
    REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("Hits@1000"));
    std::ostringstream plot;
    write_plot_csv(plot, report);
    std::size_t lines = 0;
    for (char c : plot.str())
        if (c == '\n') ++lines;
    REQUIRE(lines == 1 + report.folds.size());
}
