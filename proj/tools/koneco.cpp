// koneco: trade-flow knowledge-graph embedding pipeline.
//
// Subcommands wire the full flow: synth/ingest -> build-kg -> train ->
// predict -> evaluate -> compare. Every run writes a manifest.json next to
// its outputs with the resolved configuration, seed and input hashes.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "koneco/config.hpp"
#include "koneco/corpus.hpp"
#include "koneco/evalx.hpp"
#include "koneco/kge.hpp"
#include "koneco/kgstore.hpp"
#include "koneco/pipeline.hpp"
#include "koneco/ppml.hpp"
#include "koneco/predict.hpp"
#include "koneco/semap.hpp"
#include "koneco/turtle.hpp"
#include "koneco/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonOpts {
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 0;
    std::string config_path;
};

std::string hash_of_file(const std::string& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(koneco::fnv1a64(koneco::read_file(path))));
    return buf;
}

json config_json(const koneco::TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"embedding_size", c.dim},
                {"corruptions", c.corruptions},
                {"batch_size", c.batch_size},
                {"loss_function", "pairwise"},
                {"initialiser", "xavier"},
                {"regulariser", "lp"},
                {"regulariser_lambda", c.lambda},
                {"regulariser_p", c.lp_p},
                {"optimiser", "adam"},
                {"learning_rate", c.learning_rate},
                {"margin", c.margin},
                {"corruption_mode", c.corruption_mode == koneco::CorruptionMode::entity_uniform
                                        ? "entity_uniform"
                                        : "value_relative"},
                {"value_rel_frac", c.value_rel_frac},
                {"transe_norm", c.transe_norm == koneco::NormKind::l1 ? "l1" : "l2"},
                {"threads", c.threads},
                {"patience", c.patience},
                {"seed", c.seed}};
}

void write_manifest(const std::string& out_dir, const std::string& subcommand, json config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    std::uint64_t seed) {
    json m;
    m["tool"] = "koneco";
    m["version"] = kVersion;
    m["subcommand"] = subcommand;
    m["seed"] = seed;
    m["config"] = std::move(config);
    json in = json::object();
    for (const auto& p : inputs) in[p] = hash_of_file(p);
    m["inputs"] = in;
    m["outputs"] = outputs;
    koneco::write_file(out_dir + "/manifest.json", m.dump(2) + "\n");
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
    fs::create_directories(opts.out_dir);
    return opts.out_dir + "/" + name;
}

koneco::TrainConfig resolve_train_config(const CommonOpts& opts) {
    koneco::TrainConfig tc;  // defaults follow the in-sample preset
    if (!opts.config_path.empty())
        tc = koneco::train_config_from(koneco::Config::load(opts.config_path));
    tc.seed = koneco::seed_for(opts.seed, "kge");
    if (opts.deterministic) tc.threads = 1;
    else if (opts.threads > 0) tc.threads = opts.threads;
    return tc;
}

json eval_report_json(const koneco::EvalReport& r) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        folds.push_back(json{{"exporter", f.exporter},
                             {"importer", f.importer},
                             {"year", f.year},
                             {"cold_start", f.cold_start},
                             {"rank", f.rank},
                             {"n_candidates", f.n_candidates},
                             {"y", f.y},
                             {"yhat_top1", f.yhat_top1},
                             {"yhat_softmax", f.yhat_softmax}});
    }
    return json{{"model", std::string(koneco::model_kind_name(r.kind))},
                {"n_test", r.n_test},
                {"cold_start_skips", r.cold_start_skips},
                {"mrr", r.mrr_value},
                {"hits@1", r.hits1},
                {"hits@10", r.hits10},
                {"hits@100", r.hits100},
                {"hits@1000", r.hits1000},
                {"mse", r.mse_value},
                {"mse_top1", r.mse_top1},
                {"mse_softmax", r.mse_softmax},
                {"strategy", std::string(koneco::strategy_name(r.strategy))},
                {"seed", r.seed},
                {"config", config_json(r.config)},
                {"folds", folds}};
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOpts& opts, const koneco::SynthParams& params) {
    koneco::SynthParams p = params;
    p.seed = opts.seed;
    koneco::TradeTable table = koneco::synth_generate(p);
    std::string path = out_path(opts, "table.csv");
    koneco::write_file(path, koneco::table_to_csv(table));
    write_manifest(opts.out_dir, "synth",
                   json{{"n_countries", p.n_countries},
                        {"year", p.year},
                        {"beta0", p.beta0},
                        {"beta_gdp", p.beta_gdp},
                        {"beta_dist", p.beta_dist},
                        {"beta_agree", p.beta_agree},
                        {"noise", p.noise},
                        {"zero_frac", p.zero_frac}},
                   {}, {"table.csv"}, opts.seed);
    std::cerr << "synth: " << table.records.size() << " flows over " << p.n_countries
              << " countries -> " << path << "\n";
    return 0;
}

int cmd_ingest(const CommonOpts& opts, const std::vector<std::string>& inputs,
               const std::string& schema_path) {
    koneco::Schema schema;
    if (!schema_path.empty())
        schema = koneco::Schema::from_config(koneco::Config::load(schema_path));
    koneco::LoadReport load_report;
    koneco::TradeTable table = koneco::load_table(inputs, schema, &load_report);

    std::string table_path = out_path(opts, "table.csv");
    koneco::write_file(table_path, koneco::table_to_csv(table));

    json diag;
    diag["rows_read"] = load_report.rows_read;
    diag["rows_kept"] = load_report.rows_kept;
    diag["duplicates"] = load_report.duplicates;
    json issues = json::array();
    for (const auto& issue : load_report.issues)
        issues.push_back(json{{"file", issue.file}, {"line", issue.line}, {"message", issue.message}});
    diag["row_issues"] = issues;

    std::vector<double> values;
    for (const auto& r : table.records)
        if (r.trade) values.push_back(*r.trade);
    try {
        auto tails = koneco::tail_index(values, 0.01);
        diag["tail_index"] = json{{"alpha_hat", tails.alpha_hat}, {"k", tails.k}};
    } catch (const koneco::Error& e) {
        diag["tail_index"] = json{{"error", e.what()}};
    }
    try {
        auto hist = koneco::log_density(values, 40);
        json bins = json::array();
        for (const auto& b : hist.bins)
            bins.push_back(json{{"log10_start", b.log10_start}, {"density", b.density}});
        diag["log_density"] = json{{"bin_width", hist.bin_width},
                                   {"zero_count", hist.zero_count},
                                   {"n_positive", hist.n_positive},
                                   {"bins", bins}};
    } catch (const koneco::Error& e) {
        diag["log_density"] = json{{"error", e.what()}};
    }
    koneco::write_file(out_path(opts, "diagnostics.json"), diag.dump(2) + "\n");

    write_manifest(opts.out_dir, "ingest", json{{"schema", schema_path}}, inputs,
                   {"table.csv", "diagnostics.json"}, opts.seed);
    std::cerr << "ingest: kept " << load_report.rows_kept << "/" << load_report.rows_read
              << " rows (" << load_report.duplicates << " duplicates, " << load_report.issues.size()
              << " row issues)\n";
    return 0;
}

int cmd_build_kg(const CommonOpts& opts, const std::string& input, const std::string& rules_path,
                 int year) {
    koneco::TradeTable table = koneco::load_table({input});
    if (year != 0) table = koneco::filter_year(table, year);
    koneco::GraphSpec spec;
    if (!rules_path.empty()) spec.rules = koneco::parse_rules(koneco::read_file(rules_path));
    koneco::MapReport map_report;
    koneco::TripleSet graph = koneco::build_graph(table, spec, &map_report);

    auto validation = koneco::validate_graph(graph, spec.vocab);
    for (const auto& v : validation.violations) std::cerr << "warning: " << v.message << "\n";

    std::string ttl = koneco::turtle::serialize(graph);
    koneco::write_file(out_path(opts, "kg.ttl"), ttl);
    std::vector<std::string> inputs = {input};
    if (!rules_path.empty()) inputs.push_back(rules_path);
    write_manifest(opts.out_dir, "build-kg",
                   json{{"year", year},
                        {"rules", rules_path.empty() ? "builtin-default" : rules_path},
                        {"records_mapped", map_report.records_mapped},
                        {"skipped_absent_trade", map_report.skipped_absent_trade},
                        {"triples", graph.size()}},
                   inputs, {"kg.ttl"}, opts.seed);
    std::cerr << "build-kg: " << graph.size() << " triples from " << map_report.records_mapped
              << " records\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& graph_path, const std::string& model_name) {
    koneco::TripleSet graph = koneco::turtle::parse(koneco::read_file(graph_path));
    koneco::Store store = koneco::build_index(graph);
    koneco::TrainConfig tc = resolve_train_config(opts);
    koneco::ModelKind kind = koneco::model_kind_from(model_name);

    koneco::EmbeddingModel model = koneco::init_model(kind, tc.dim, store, tc.seed, tc.transe_norm);
    koneco::TrainTrace trace = koneco::train(model, store, tc);
    koneco::save_model(model, out_path(opts, "model.bin"), koneco::store_label_hash(graph));

    std::ostringstream trace_csv;
    trace_csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < trace.epoch_mean_loss.size(); ++e)
        trace_csv << (e + 1) << ',' << koneco::format_double(trace.epoch_mean_loss[e]) << '\n';
    koneco::write_file(out_path(opts, "trace.csv"), trace_csv.str());

    json cfg = config_json(tc);
    cfg["model"] = model_name;
    write_manifest(opts.out_dir, "train", cfg, {graph_path}, {"model.bin", "trace.csv"}, opts.seed);
    double total_ms = 0;
    for (double ms : trace.epoch_wall_ms) total_ms += ms;
    std::cerr << "train: " << trace.epochs_run << " epochs in " << static_cast<long>(total_ms)
              << " ms, final mean loss "
              << (trace.epoch_mean_loss.empty() ? 0.0 : trace.epoch_mean_loss.back()) << "\n";
    return 0;
}

int cmd_predict(const CommonOpts& opts, const std::string& graph_path,
                const std::string& model_path, const std::string& queries_path,
                const std::string& strategy_name_str, int top_k) {
    koneco::TripleSet graph = koneco::turtle::parse(koneco::read_file(graph_path));
    koneco::Store store = koneco::build_index(graph);
    koneco::LoadedModel lm = koneco::load_model(model_path);
    if (lm.label_hash != koneco::store_label_hash(graph))
        throw koneco::ArgumentError("model file was trained on a different graph (label hash mismatch)");
    koneco::Strategy strategy =
        strategy_name_str == "softmax" ? koneco::Strategy::softmax : koneco::Strategy::top1;
    if (strategy_name_str != "softmax" && strategy_name_str != "top1")
        throw koneco::ArgumentError("unknown strategy '" + strategy_name_str + "'");

    std::ifstream qin(queries_path);
    if (!qin) throw koneco::IoError("cannot open queries file: " + queries_path);
    koneco::CsvReader reader(qin);
    koneco::CsvRow header;
    if (!reader.next(header)) throw koneco::SchemaError("queries file is empty");
    int exp_col = -1, imp_col = -1, year_col = -1;
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
        std::string h(koneco::trim(header.fields[i]));
        if (h == "exporter") exp_col = static_cast<int>(i);
        else if (h == "importer") imp_col = static_cast<int>(i);
        else if (h == "year") year_col = static_cast<int>(i);
    }
    if (exp_col < 0 || imp_col < 0 || year_col < 0)
        throw koneco::SchemaError("queries file needs exporter, importer and year columns");

    koneco::SchemeSet schemes;
    std::ostringstream out;
    out << "exporter,importer,year,predicted,confidence,strategy\n";
    std::size_t unknown = 0;
    koneco::CsvRow row;
    while (reader.next(row)) {
        std::string exporter(koneco::trim(row.fields[static_cast<std::size_t>(exp_col)]));
        std::string importer(koneco::trim(row.fields[static_cast<std::size_t>(imp_col)]));
        std::string year(koneco::trim(row.fields[static_cast<std::size_t>(year_col)]));
        std::string subject = exporter + "_" + importer + "_" + year;
        auto sid = store.graph.entity_id(subject);
        out << exporter << ',' << importer << ',' << year << ',';
        if (!sid) {
            ++unknown;
            out << "NA,NA," << strategy_name_str << '\n';
            continue;
        }
        auto pred = koneco::predict_value(lm.model, store, *sid, schemes, strategy, top_k);
        out << koneco::format_double(pred.point) << ',' << koneco::format_double(pred.confidence)
            << ',' << strategy_name_str << '\n';
    }
    koneco::write_file(out_path(opts, "predictions.csv"), out.str());
    write_manifest(opts.out_dir, "predict",
                   json{{"strategy", strategy_name_str}, {"top_k", top_k}, {"unknown_keys", unknown}},
                   {graph_path, model_path, queries_path}, {"predictions.csv"}, opts.seed);
    if (unknown) std::cerr << "predict: " << unknown << " query keys not present in the graph\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& input, const std::string& model_name,
                 int year, bool raw, const std::string& strategy_name_str, int top_k) {
    koneco::TradeTable table = koneco::load_table({input});
    if (year != 0) table = koneco::filter_year(table, year);

    koneco::PipelineConfig pc;
    pc.kind = koneco::model_kind_from(model_name);
    pc.train = resolve_train_config(opts);
    pc.filtered = !raw;
    pc.strategy = strategy_name_str == "softmax" ? koneco::Strategy::softmax : koneco::Strategy::top1;
    pc.top_k = top_k;
    pc.master_seed = opts.seed;
    pc.threads = opts.deterministic ? 1 : opts.threads;

    koneco::EvalReport report = koneco::loo_cv(table, pc);
    koneco::write_file(out_path(opts, "report.json"), eval_report_json(report).dump(2) + "\n");
    koneco::write_file(out_path(opts, "report.txt"), koneco::report_text(report));
    std::ostringstream plot;
    koneco::write_plot_csv(plot, report);
    koneco::write_file(out_path(opts, "plotdata.csv"), plot.str());

    json cfg = config_json(pc.train);
    cfg["model"] = model_name;
    cfg["filtered"] = pc.filtered;
    cfg["strategy"] = strategy_name_str;
    write_manifest(opts.out_dir, "evaluate", cfg, {input},
                   {"report.json", "report.txt", "plotdata.csv"}, opts.seed);
    std::cerr << koneco::report_text(report);
    return 0;
}

int cmd_compare(const CommonOpts& opts, const std::string& input,
                const std::vector<std::string>& model_names, int year) {
    koneco::TradeTable table = koneco::load_table({input});
    if (year != 0) table = koneco::filter_year(table, year);

    std::vector<koneco::PipelineConfig> configs;
    for (const auto& name : model_names) {
        koneco::PipelineConfig pc;
        pc.kind = koneco::model_kind_from(name);
        pc.train = resolve_train_config(opts);
        pc.master_seed = opts.seed;
        pc.threads = opts.deterministic ? 1 : opts.threads;
        configs.push_back(pc);
    }
    koneco::ppml::GravitySpec spec;
    if (!opts.config_path.empty())
        spec = koneco::ppml::gravity_spec_from(koneco::Config::load(opts.config_path));

    koneco::CompareReport report = koneco::compare_models(table, configs, spec);

    json j;
    j["ppml"] = json{{"mse", report.ppml_eval.mse_value},
                     {"n_test", report.ppml_eval.n_test},
                     {"cold_start_skips", report.ppml_eval.cold_start_skips}};
    json models = json::array();
    for (std::size_t i = 0; i < report.models.size(); ++i) {
        json m = eval_report_json(report.models[i]);
        m["mse_ratio_vs_ppml"] = report.mse_ratio_vs_ppml[i];
        models.push_back(std::move(m));
    }
    j["models"] = models;
    koneco::write_file(out_path(opts, "comparison.json"), j.dump(2) + "\n");
    koneco::write_file(out_path(opts, "comparison.txt"), koneco::compare_text(report));

    write_manifest(opts.out_dir, "compare",
                   json{{"models", model_names}, {"year", year}}, {input},
                   {"comparison.json", "comparison.txt"}, opts.seed);
    std::cerr << koneco::compare_text(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"koneco: trade-flow knowledge-graph embedding pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonOpts opts;
    // Shared options registered per subcommand so they appear after it.
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
        cmd->add_option("--seed", opts.seed, "Master seed")->capture_default_str();
        cmd->add_flag("--deterministic", opts.deterministic,
                      "Force single-threaded numeric paths");
        cmd->add_option("--threads", opts.threads, "Worker threads (0 = auto)");
        cmd->add_option("--config", opts.config_path, "Config/preset file");
    };

    // synth
    koneco::SynthParams synth_params;
    synth_params.noise = 1.0;
    synth_params.zero_frac = 0.3;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic gravity trade table");
    synth->add_option("--countries", synth_params.n_countries, "Number of countries")
        ->capture_default_str();
    synth->add_option("--year", synth_params.year, "Year stamp")->capture_default_str();
    synth->add_option("--beta0", synth_params.beta0, "Gravity intercept")->capture_default_str();
    synth->add_option("--beta-gdp", synth_params.beta_gdp, "GDP elasticity")->capture_default_str();
    synth->add_option("--beta-dist", synth_params.beta_dist, "Distance elasticity")
        ->capture_default_str();
    synth->add_option("--beta-agree", synth_params.beta_agree, "Agreement premium")
        ->capture_default_str();
    synth->add_option("--noise", synth_params.noise, "Heavy-tail noise (inverse tail index)")
        ->capture_default_str();
    synth->add_option("--zero-frac", synth_params.zero_frac, "Fraction of flows forced to zero")
        ->capture_default_str();
    add_common(synth);

    // ingest
    std::vector<std::string> ingest_inputs;
    std::string schema_path;
    auto* ingest = app.add_subcommand("ingest", "Load CSVs into the canonical table + diagnostics");
    ingest->add_option("--input", ingest_inputs, "Input CSV file(s)")->required();
    ingest->add_option("--schema", schema_path, "Schema map file (canonical = actual column)");
    add_common(ingest);

    // build-kg
    std::string bk_input, rules_path;
    int bk_year = 0;
    auto* build_kg = app.add_subcommand("build-kg", "Map a trade table to a Turtle knowledge graph");
    build_kg->add_option("--input", bk_input, "Canonical table CSV")->required();
    build_kg->add_option("--rules", rules_path, "Mapping rules file (default: built-in rules)");
    build_kg->add_option("--year", bk_year, "Filter to one year before mapping");
    add_common(build_kg);

    // train
    std::string train_graph, model_name = "transe";
    auto* train_cmd = app.add_subcommand("train", "Train an embedding model on a .ttl graph");
    train_cmd->add_option("--graph", train_graph, "Knowledge graph (.ttl)")->required();
    train_cmd->add_option("--model", model_name, "transe|distmult|complex")->capture_default_str();
    add_common(train_cmd);

    // predict
    std::string pr_graph, pr_model, pr_queries, pr_strategy = "top1";
    int pr_topk = 5;
    auto* predict_cmd = app.add_subcommand("predict", "Batch tail prediction for query keys");
    predict_cmd->add_option("--graph", pr_graph, "Knowledge graph (.ttl)")->required();
    predict_cmd->add_option("--model-file", pr_model, "Trained model (.bin)")->required();
    predict_cmd->add_option("--queries", pr_queries, "CSV with exporter,importer,year")->required();
    predict_cmd->add_option("--strategy", pr_strategy, "top1|softmax")->capture_default_str();
    predict_cmd->add_option("--top-k", pr_topk, "Top-k window for softmax decoding")
        ->capture_default_str();
    add_common(predict_cmd);

    // evaluate
    std::string ev_input, ev_model = "transe", ev_strategy = "top1";
    int ev_year = 0, ev_topk = 5;
    bool ev_raw = false;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Leave-one-out cross-validation report");
    evaluate_cmd->add_option("--input", ev_input, "Canonical table CSV")->required();
    evaluate_cmd->add_option("--model", ev_model, "transe|distmult|complex")->capture_default_str();
    evaluate_cmd->add_option("--year", ev_year, "Filter to one year first");
    evaluate_cmd->add_flag("--raw,!--filtered", ev_raw,
                           "Raw (unfiltered) ranking; filtered is the default");
    evaluate_cmd->add_option("--strategy", ev_strategy, "top1|softmax")->capture_default_str();
    evaluate_cmd->add_option("--top-k", ev_topk, "Top-k window for softmax decoding")
        ->capture_default_str();
    add_common(evaluate_cmd);

    // compare
    std::string cp_input;
    std::vector<std::string> cp_models = {"transe"};
    int cp_year = 0;
    auto* compare_cmd = app.add_subcommand("compare", "Compare embedding models against PPML");
    compare_cmd->add_option("--input", cp_input, "Canonical table CSV")->required();
    compare_cmd->add_option("--models", cp_models, "Model kinds to compare")->delimiter(',');
    compare_cmd->add_option("--year", cp_year, "Filter to one year first");
    add_common(compare_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(opts, synth_params);
        if (ingest->parsed()) return cmd_ingest(opts, ingest_inputs, schema_path);
        if (build_kg->parsed()) return cmd_build_kg(opts, bk_input, rules_path, bk_year);
        if (train_cmd->parsed()) return cmd_train(opts, train_graph, model_name);
        if (predict_cmd->parsed())
            return cmd_predict(opts, pr_graph, pr_model, pr_queries, pr_strategy, pr_topk);
        if (evaluate_cmd->parsed())
            return cmd_evaluate(opts, ev_input, ev_model, ev_year, ev_raw, ev_strategy, ev_topk);
        if (compare_cmd->parsed()) return cmd_compare(opts, cp_input, cp_models, cp_year);
    } catch (const koneco::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
