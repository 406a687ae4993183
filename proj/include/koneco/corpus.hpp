#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "koneco/config.hpp"
#include "koneco/csv.hpp"
#include "koneco/error.hpp"
#include "koneco/rng.hpp"
#include "koneco/util.hpp"

namespace koneco {

// One exporter-importer-year observation. Optional features carry an explicit
// absent marker; they are never zero-filled.
struct TradeRecord {
    std::string exporter;
    std::string importer;
    int year = 0;
    std::optional<double> trade;  // millions of USD; absent records are rejected downstream
    std::optional<double> distance;
    std::optional<bool> agreement;
    std::optional<double> gdp_wdi_o, gdp_wdi_d;
    std::optional<double> gdp_pwt_o, gdp_pwt_d;
    std::optional<double> pop_o, pop_d;
    std::optional<double> lat_o, lng_o, lat_d, lng_d;

    bool operator==(const TradeRecord&) const = default;
};

struct TradeTable {
    std::vector<TradeRecord> records;
    std::pair<int, int> year_range{0, 0};
    std::set<std::string> country_set;

    bool operator==(const TradeTable&) const = default;
};

// Canonical column names, in canonical order.
inline const std::vector<std::string>& canonical_columns() {
    static const std::vector<std::string> cols = {
        "exporter", "importer", "year",  "trade", "dist",  "agree",
        "gdp_wdi_o", "gdp_wdi_d", "gdp_pwt_o", "gdp_pwt_d", "pop_o", "pop_d",
        "lat_o", "lng_o", "lat_d", "lng_d"};
    return cols;
}

// Maps canonical field names to the column names actually present in a file.
// Unlisted fields keep their canonical name.
struct Schema {
    std::map<std::string, std::string> renames;

    std::string column_for(const std::string& canonical) const {
        auto it = renames.find(canonical);
        return it == renames.end() ? canonical : it->second;
    }

    static Schema from_config(const Config& cfg) {
        Schema s;
        for (const auto& section : {std::string(""), std::string("schema")}) {
            auto it = cfg.sections.find(section);
            if (it == cfg.sections.end()) continue;
            for (const auto& [k, v] : it->second) {
                if (std::find(canonical_columns().begin(), canonical_columns().end(), k) ==
                    canonical_columns().end())
                    throw SchemaError("schema maps unknown canonical field '" + k + "'");
                s.renames[k] = v;
            }
        }
        return s;
    }
};

struct LoadReport {
    struct RowIssue {
        std::string file;
        std::size_t line = 0;
        std::string message;
    };
    std::size_t rows_read = 0;
    std::size_t rows_kept = 0;
    std::size_t duplicates = 0;
    std::vector<RowIssue> issues;
};

namespace detail {

inline std::optional<bool> parse_bool_cell(std::string_view s) {
    s = trim(s);
    if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
    return std::nullopt;
}

// Canonical-order numeric accessors used by the loader, the writer and the
// mapping layer.
using NumField = std::optional<double> TradeRecord::*;
inline const std::vector<std::pair<std::string, NumField>>& numeric_fields() {
    static const std::vector<std::pair<std::string, NumField>> f = {
        {"trade", &TradeRecord::trade},
        {"dist", &TradeRecord::distance},
        {"gdp_wdi_o", &TradeRecord::gdp_wdi_o},
        {"gdp_wdi_d", &TradeRecord::gdp_wdi_d},
        {"gdp_pwt_o", &TradeRecord::gdp_pwt_o},
        {"gdp_pwt_d", &TradeRecord::gdp_pwt_d},
        {"pop_o", &TradeRecord::pop_o},
        {"pop_d", &TradeRecord::pop_d},
        {"lat_o", &TradeRecord::lat_o},
        {"lng_o", &TradeRecord::lng_o},
        {"lat_d", &TradeRecord::lat_d},
        {"lng_d", &TradeRecord::lng_d}};
    return f;
}

inline std::optional<double> numeric_field(const TradeRecord& r, std::string_view name) {
    for (const auto& [n, ptr] : numeric_fields())
        if (n == name) return r.*ptr;
    return std::nullopt;
}

// Validates per-record invariants; returns an error message or empty.
inline std::string record_issue(const TradeRecord& r) {
    if (r.exporter.empty() || r.importer.empty()) return "empty country code";
    if (r.exporter == r.importer) return "exporter equals importer";
    if (!r.trade) return "trade value absent";
    if (!std::isfinite(*r.trade) || *r.trade < 0) return "trade must be finite and >= 0";
    if (r.distance && (!std::isfinite(*r.distance) || *r.distance <= 0))
        return "dist must be > 0";
    auto in_range = [](const std::optional<double>& v, double lo, double hi) {
        return !v || (std::isfinite(*v) && *v >= lo && *v <= hi);
    };
    if (!in_range(r.lat_o, -90, 90) || !in_range(r.lat_d, -90, 90)) return "latitude outside [-90, 90]";
    if (!in_range(r.lng_o, -180, 180) || !in_range(r.lng_d, -180, 180))
        return "longitude outside [-180, 180]";
    return {};
}

inline void finalize(TradeTable& t) {
    t.country_set.clear();
    if (t.records.empty()) {
        t.year_range = {0, 0};
        return;
    }
    int lo = t.records.front().year, hi = lo;
    for (const auto& r : t.records) {
        lo = std::min(lo, r.year);
        hi = std::max(hi, r.year);
        t.country_set.insert(r.exporter);
        t.country_set.insert(r.importer);
    }
    t.year_range = {lo, hi};
}

}  // namespace detail

inline void load_table_stream(std::istream& in, const std::string& name,
                              const Schema& schema, LoadReport& report,
                              TradeTable& table,
                              std::set<std::tuple<std::string, std::string, int>>& seen) {
    CsvReader reader(in);
    CsvRow header;
    if (!reader.next(header)) throw SchemaError("file '" + name + "' is empty");

    std::map<std::string, int> col_index;  // canonical name -> column
    for (const auto& canonical : canonical_columns()) {
        std::string want = schema.column_for(canonical);
        for (std::size_t i = 0; i < header.fields.size(); ++i) {
            if (std::string(trim(header.fields[i])) == want) {
                col_index[canonical] = static_cast<int>(i);
                break;
            }
        }
    }
    for (const char* mandatory : {"exporter", "importer", "year", "trade"}) {
        if (!col_index.count(mandatory))
            throw SchemaError("file '" + name + "' is missing mandatory column '" +
                              schema.column_for(mandatory) + "' (field " + mandatory + ")");
    }

    auto cell = [&](const CsvRow& row, const std::string& canonical) -> std::optional<std::string> {
        auto it = col_index.find(canonical);
        if (it == col_index.end()) return std::nullopt;
        if (static_cast<std::size_t>(it->second) >= row.fields.size()) return std::nullopt;
        std::string v(trim(row.fields[static_cast<std::size_t>(it->second)]));
        if (v.empty()) return std::nullopt;
        return v;
    };

    CsvRow row;
    while (reader.next(row)) {
        if (row.fields.size() == 1 && trim(row.fields[0]).empty()) continue;
        ++report.rows_read;
        TradeRecord rec;
        std::string issue;

        if (auto v = cell(row, "exporter")) rec.exporter = *v;
        if (auto v = cell(row, "importer")) rec.importer = *v;
        if (auto v = cell(row, "year")) {
            if (auto i = parse_int(*v)) rec.year = static_cast<int>(*i);
            else issue = "unparsable year '" + *v + "'";
        } else {
            issue = "year absent";
        }
        for (const auto& [canonical, ptr] : detail::numeric_fields()) {
            if (!issue.empty()) break;
            if (auto v = cell(row, canonical)) {
                if (auto d = parse_double(*v)) rec.*ptr = *d;
                else issue = "unparsable numeric '" + *v + "' in column " + canonical;
            }
        }
        if (issue.empty()) {
            if (auto v = cell(row, "agree")) {
                if (auto b = detail::parse_bool_cell(*v)) rec.agreement = *b;
                else issue = "unparsable boolean '" + *v + "' in column agree";
            }
        }
        if (issue.empty()) issue = detail::record_issue(rec);
        if (!issue.empty()) {
            report.issues.push_back({name, row.line, issue});
            continue;
        }
        auto key = std::make_tuple(rec.exporter, rec.importer, rec.year);
        if (!seen.insert(key).second) {
            ++report.duplicates;
            continue;
        }
        table.records.push_back(std::move(rec));
        ++report.rows_kept;
    }
}

// Loads and merges one or more gravity-style CSV files. Malformed rows are
// recorded in the report, never silently dropped. Duplicate
// (exporter, importer, year) keys keep the first occurrence.
inline TradeTable load_table(const std::vector<std::string>& paths, const Schema& schema = {},
                             LoadReport* report_out = nullptr) {
    if (paths.empty()) throw ArgumentError("load_table: no input files");
    TradeTable table;
    LoadReport report;
    std::set<std::tuple<std::string, std::string, int>> seen;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open file: " + path);
        load_table_stream(in, path, schema, report, table, seen);
    }
    detail::finalize(table);
    if (report_out) *report_out = std::move(report);
    return table;
}

inline void write_table(const TradeTable& table, std::ostream& out) {
    write_csv_row(out, canonical_columns());
    for (const auto& r : table.records) {
        std::vector<std::string> fields;
        fields.reserve(canonical_columns().size());
        fields.push_back(r.exporter);
        fields.push_back(r.importer);
        fields.push_back(std::to_string(r.year));
        auto num = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
        fields.push_back(num(r.trade));
        fields.push_back(num(r.distance));
        fields.push_back(r.agreement ? (*r.agreement ? "1" : "0") : "");
        for (const auto& [name, ptr] : detail::numeric_fields()) {
            if (name == "trade" || name == "dist") continue;
            fields.push_back(num(r.*ptr));
        }
        write_csv_row(out, fields);
    }
}

inline std::string table_to_csv(const TradeTable& table) {
    std::ostringstream ss;
    write_table(table, ss);
    return ss.str();
}

// Exactly the records of the given year; errors are distinguishable from an
// empty input (which violates the precondition instead).
inline TradeTable filter_year(const TradeTable& table, int year) {
    if (table.records.empty()) throw ArgumentError("filter_year: empty input table");
    if (year < table.year_range.first || year > table.year_range.second)
        throw EmptyResultError("year " + std::to_string(year) + " outside table range [" +
                               std::to_string(table.year_range.first) + ", " +
                               std::to_string(table.year_range.second) + "]");
    TradeTable out;
    for (const auto& r : table.records)
        if (r.year == year) out.records.push_back(r);
    if (out.records.empty())
        throw EmptyResultError("no records for year " + std::to_string(year));
    detail::finalize(out);
    return out;
}

struct SynthParams {
    int n_countries = 20;
    int year = 2010;
    double beta0 = -10.0;
    double beta_gdp = 1.0;
    double beta_dist = -1.0;
    double beta_agree = 0.5;
    // Heavy-tail mixing parameter: the probability that a flow receives a
    // two-sided Pareto(alpha = 1) multiplicative shock. Any value > 0 gives
    // the mixture an alpha = 1 upper tail; 0 disables noise entirely.
    double noise = 0.0;
    // Exact fraction of directed flows forced to zero (deterministic thinning).
    double zero_frac = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string synth_code(int i) {
    std::string s = "AAA";
    s[2] = static_cast<char>('A' + i % 26);
    s[1] = static_cast<char>('A' + (i / 26) % 26);
    s[0] = static_cast<char>('A' + (i / 676) % 26);
    return s;
}

inline double haversine_km(double lat1, double lng1, double lat2, double lng2) {
    constexpr double kEarthRadiusKm = 6371.0;
    constexpr double kDeg = std::numbers::pi / 180.0;
    double dlat = (lat2 - lat1) * kDeg;
    double dlng = (lng2 - lng1) * kDeg;
    double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
               std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlng / 2) * std::sin(dlng / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace detail

// Generates all n*(n-1) directed flows from the gravity functional form with
// optional heavy-tailed multiplicative noise. Pure function of its arguments.
inline TradeTable synth_generate(const SynthParams& p) {
    if (p.n_countries < 2) throw ArgumentError("synth_generate: need at least 2 countries");
    if (p.zero_frac < 0 || p.zero_frac > 1) throw ArgumentError("synth_generate: zero_frac outside [0, 1]");
    if (p.noise < 0 || p.noise > 1) throw ArgumentError("synth_generate: noise outside [0, 1]");
    Rng rng(p.seed);

    const int n = p.n_countries;
    struct Country {
        std::string code;
        double lat, lng, gdp_wdi, gdp_pwt, pop;
    };
    std::vector<Country> cs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& c = cs[static_cast<std::size_t>(i)];
        c.code = detail::synth_code(i);
        c.lat = rng.uniform(-60.0, 60.0);
        c.lng = rng.uniform(-180.0, 180.0);
        // Country sizes are heavy-tailed in the real corpus; a wide
        // log-normal keeps the gravity signal dominant over the noise.
        c.gdp_wdi = std::exp(10.0 + 4.0 * rng.normal());
        c.gdp_pwt = c.gdp_wdi * rng.uniform(0.9, 1.1);
        c.pop = std::exp(9.0 + 0.8 * rng.normal());
    }
    // Agreements are symmetric per unordered pair.
    std::vector<std::vector<bool>> agree(static_cast<std::size_t>(n),
                                         std::vector<bool>(static_cast<std::size_t>(n), false));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            agree[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                agree[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = rng.bernoulli(0.3);

    TradeTable table;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto& o = cs[static_cast<std::size_t>(i)];
            const auto& d = cs[static_cast<std::size_t>(j)];
            double dist = std::max(1.0, detail::haversine_km(o.lat, o.lng, d.lat, d.lng));
            bool agr = agree[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            double log_flow = p.beta0 + p.beta_gdp * (std::log(o.gdp_wdi) + std::log(d.gdp_wdi)) +
                              p.beta_dist * std::log(dist) + p.beta_agree * (agr ? 1.0 : 0.0);
            double flow = std::exp(log_flow);
            if (p.noise > 0 && rng.bernoulli(p.noise)) {
                double u = rng.next_double();
                while (u <= 0.0) u = rng.next_double();
                flow *= rng.coin() ? 1.0 / u : u;  // two-sided Pareto(1) shock
            }
            TradeRecord r;
            r.exporter = o.code;
            r.importer = d.code;
            r.year = p.year;
            r.trade = flow;
            r.distance = dist;
            r.agreement = agr;
            r.gdp_wdi_o = o.gdp_wdi;
            r.gdp_wdi_d = d.gdp_wdi;
            r.gdp_pwt_o = o.gdp_pwt;
            r.gdp_pwt_d = d.gdp_pwt;
            r.pop_o = o.pop;
            r.pop_d = d.pop;
            r.lat_o = o.lat;
            r.lng_o = o.lng;
            r.lat_d = d.lat;
            r.lng_d = d.lng;
            table.records.push_back(std::move(r));
        }
    }
    // Deterministic thinning: exactly round(zero_frac * flows) flows become 0.
    // The smallest flows are truncated, mirroring how tiny potential flows
    // fail to materialize at all.
    auto n_flows = table.records.size();
    auto n_zero = static_cast<std::size_t>(std::llround(p.zero_frac * static_cast<double>(n_flows)));
    std::vector<std::size_t> idx(n_flows);
    for (std::size_t k = 0; k < n_flows; ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return *table.records[a].trade < *table.records[b].trade;
    });
    for (std::size_t k = 0; k < n_zero; ++k) table.records[idx[k]].trade = 0.0;

    detail::finalize(table);
    return table;
}

struct HistogramBin {
    double log10_start = 0.0;
    double density = 0.0;
    bool operator==(const HistogramBin&) const = default;
};

struct Histogram {
    std::vector<HistogramBin> bins;
    double bin_width = 0.0;
    std::size_t zero_count = 0;
    std::size_t n_positive = 0;
};

struct TailDiagnostics {
    double alpha_hat = 0.0;
    std::size_t k = 0;
    Histogram histogram;
};

// Hill estimator over the top-k order statistics of the positive values.
inline TailDiagnostics tail_index(const std::vector<double>& values, double k_fraction) {
    if (!(k_fraction > 0.0 && k_fraction <= 0.5))
        throw ArgumentError("tail_index: k_fraction must be in (0, 0.5]");
    std::vector<double> pos;
    pos.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v) && v > 0) pos.push_back(v);
    if (pos.size() < 10)
        throw InsufficientDataError("tail_index: need at least 10 positive values, got " +
                                    std::to_string(pos.size()));
    std::sort(pos.begin(), pos.end(), std::greater<>());
    auto n = pos.size();
    auto k = static_cast<std::size_t>(std::floor(k_fraction * static_cast<double>(n)));
    k = std::max<std::size_t>(1, std::min(k, n - 1));
    double log_xk = std::log(pos[k]);  // (k+1)-th largest
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::log(pos[i]) - log_xk;
    if (sum <= 0.0)
        throw DegenerateSampleError("tail_index: degenerate sample (no spread in top order statistics)");
    TailDiagnostics d;
    d.alpha_hat = static_cast<double>(k) / sum;
    d.k = k;
    return d;
}

// Histogram of log10 of the positive values, normalized to integrate to 1.
// Zeros are counted separately and excluded from the log-domain support.
inline Histogram log_density(const std::vector<double>& values, int n_bins) {
    if (n_bins < 1) throw ArgumentError("log_density: n_bins must be >= 1");
    Histogram h;
    std::vector<double> logs;
    for (double v : values) {
        if (!std::isfinite(v) || v < 0) throw ArgumentError("log_density: values must be finite and >= 0");
        if (v == 0) ++h.zero_count;
        else logs.push_back(std::log10(v));
    }
    if (logs.empty()) throw InsufficientDataError("log_density: no positive values");
    h.n_positive = logs.size();
    auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {
        h.bin_width = 1.0;
        h.bins.push_back({lo - 0.5, 1.0});
        return h;
    }
    h.bin_width = (hi - lo) / n_bins;
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
    for (double u : logs) {
        auto b = static_cast<std::size_t>((u - lo) / h.bin_width);
        if (b >= counts.size()) b = counts.size() - 1;  // max value closes the last bin
        ++counts[b];
    }
    for (int b = 0; b < n_bins; ++b)
        h.bins.push_back({lo + b * h.bin_width,
                          static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                              (static_cast<double>(h.n_positive) * h.bin_width)});
    return h;
}

}  // namespace koneco
