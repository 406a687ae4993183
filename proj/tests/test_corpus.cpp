#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "koneco/corpus.hpp"
#include "oracles.hpp"

using namespace koneco;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

TradeTable load_text(const std::string& csv, const Schema& schema = {},
                     LoadReport* report = nullptr) {
    auto path = write_temp("koneco_test_table.csv", csv);
    return load_table({path}, schema, report);
}

}  // namespace

TEST_CASE("load_table: two-row fixture") {
    auto table = load_text(
        "exporter,importer,year,trade,dist\n"
        "ARB,NZL,1990,5.0,12000\n"
        "NZL,AUS,1990,7.5,2200\n");
    REQUIRE(table.records.size() == 2);
    REQUIRE(table.country_set.size() == 3);
    REQUIRE(table.year_range == std::pair<int, int>{1990, 1990});
    REQUIRE(table.records[0].trade.value() == 5.0);
    REQUIRE(table.records[0].distance.value() == 12000.0);
    REQUIRE_FALSE(table.records[0].agreement.has_value());
}

TEST_CASE("load_table: empty GDP cell becomes absent, not zero") {
    auto table = load_text(
        "exporter,importer,year,trade,gdp_wdi_o\n"
        "ARB,NZL,1990,5.0,\n"
        "NZL,ARB,1990,2.0,123.4\n");
    REQUIRE(table.records.size() == 2);
    REQUIRE_FALSE(table.records[0].gdp_wdi_o.has_value());
    REQUIRE(table.records[1].gdp_wdi_o.value() == 123.4);
}

TEST_CASE("load_table: missing mandatory column names it") {
    REQUIRE_THROWS_WITH(load_text("exporter,importer,year\nA,B,1990\n"),
                        Catch::Matchers::ContainsSubstring("trade"));
}

TEST_CASE("load_table: schema renames columns") {
    Schema schema;
    schema.renames["exporter"] = "iso_o";
    schema.renames["importer"] = "iso_d";
    schema.renames["trade"] = "flow";
    auto table = load_text("iso_o,iso_d,year,flow\nARB,NZL,1990,5\n", schema);
    REQUIRE(table.records.size() == 1);
    REQUIRE(table.records[0].exporter == "ARB");
    REQUIRE(table.records[0].trade.value() == 5.0);
}

TEST_CASE("load_table: malformed rows are reported with line numbers") {
    LoadReport report;
    auto table = load_text(
        "exporter,importer,year,trade\n"
        "ARB,NZL,1990,5.0\n"
        "ARB,NZL,banana,1.0\n"
        "ARB,ARB,1990,2.0\n"
        "ARB,AUS,1990,oops\n"
        "ARB,CHL,1990,\n",
        {}, &report);
    REQUIRE(table.records.size() == 1);
    REQUIRE(report.rows_read == 5);
    REQUIRE(report.rows_kept == 1);
    REQUIRE(report.issues.size() == 4);
    REQUIRE(report.issues[0].line == 3);
    REQUIRE_THAT(report.issues[0].message, Catch::Matchers::ContainsSubstring("year"));
    REQUIRE_THAT(report.issues[1].message, Catch::Matchers::ContainsSubstring("exporter equals importer"));
    REQUIRE_THAT(report.issues[2].message, Catch::Matchers::ContainsSubstring("trade"));
    REQUIRE_THAT(report.issues[3].message, Catch::Matchers::ContainsSubstring("absent"));
}

TEST_CASE("load_table: duplicate keys keep first occurrence and are counted") {
    LoadReport report;
    auto table = load_text(
        "exporter,importer,year,trade\n"
        "ARB,NZL,1990,5.0\n"
        "ARB,NZL,1990,9.0\n"
        "ARB,NZL,1991,9.0\n",
        {}, &report);
    REQUIRE(table.records.size() == 2);
    REQUIRE(report.duplicates == 1);
    REQUIRE(table.records[0].trade.value() == 5.0);
}

TEST_CASE("write_table then load_table round-trips, absent markers preserved") {
    SynthParams params;
    params.n_countries = 6;
    params.noise = 1.0;
    params.zero_frac = 0.25;
    params.seed = 11;
    auto table = synth_generate(params);
    table.records[3].gdp_pwt_o.reset();  // exercise the absent marker
    table.records[5].agreement.reset();
    detail::finalize(table);

    auto path = write_temp("koneco_roundtrip.csv", table_to_csv(table));
    auto reloaded = load_table({path});
    REQUIRE(reloaded == table);
}

TEST_CASE("filter_year basics and errors") {
    auto table = load_text(
        "exporter,importer,year,trade\n"
        "ARB,NZL,1990,5.0\n"
        "NZL,ARB,1991,2.0\n");
    auto f = filter_year(table, 1990);
    REQUIRE(f.records.size() == 1);
    REQUIRE(f.records[0].year == 1990);
    REQUIRE(f.country_set.size() == 2);

    REQUIRE_THROWS_AS(filter_year(table, 1989), EmptyResultError);
    REQUIRE_THROWS_AS(filter_year(TradeTable{}, 1990), ArgumentError);
}

TEST_CASE("filter_year: in-range year with no records errors, not empty table") {
    TradeTable table;
    for (int year : {1990, 1992}) {
        TradeRecord r;
        r.exporter = "AAA";
        r.importer = "AAB";
        r.year = year;
        r.trade = 1.0;
        table.records.push_back(r);
    }
    detail::finalize(table);
    REQUIRE_THROWS_AS(filter_year(table, 1991), EmptyResultError);
}

TEST_CASE("filter_year: synthetic 3-year table partitions 100 per year") {
    TradeTable combined;
    for (int year : {2000, 2001, 2002}) {
        SynthParams p;
        p.n_countries = 11;  // deterministic thinning keeps 100 of 110
        p.year = year;
        p.zero_frac = 0.0;
        p.seed = static_cast<std::uint64_t>(year);
        auto t = synth_generate(p);
        t.records.resize(100);
        combined.records.insert(combined.records.end(), t.records.begin(), t.records.end());
    }
    detail::finalize(combined);
    REQUIRE(combined.records.size() == 300);
    REQUIRE(filter_year(combined, 2001).records.size() == 100);

    // Partition property: per-year filters reassemble the original multiset.
    std::size_t total = 0;
    for (int year : {2000, 2001, 2002}) total += filter_year(combined, year).records.size();
    REQUIRE(total == combined.records.size());
}

TEST_CASE("synth_generate: n=2 with noise off and zero betas gives unit flows") {
    SynthParams p;
    p.n_countries = 2;
    p.beta0 = 0.0;
    p.beta_gdp = 0.0;
    p.beta_dist = 0.0;
    p.beta_agree = 0.0;
    p.noise = 0.0;
    p.zero_frac = 0.0;
    p.seed = 3;
    auto table = synth_generate(p);
    REQUIRE(table.records.size() == 2);
    REQUIRE(table.records[0].trade.value() == 1.0);
    REQUIRE(table.records[1].trade.value() == 1.0);
}

TEST_CASE("synth_generate: deterministic in the seed, byte-identical") {
    SynthParams p;
    p.n_countries = 8;
    p.noise = 1.0;
    p.zero_frac = 0.2;
    p.seed = 99;
    auto a = synth_generate(p);
    auto b = synth_generate(p);
    REQUIRE(a == b);
    REQUIRE(table_to_csv(a) == table_to_csv(b));

    p.seed = 100;
    REQUIRE_FALSE(synth_generate(p) == a);
}

TEST_CASE("synth_generate: exact zero thinning count (20 countries, 0.3)") {
    SynthParams p;
    p.n_countries = 20;
    p.noise = 1.0;
    p.zero_frac = 0.3;
    p.seed = 7;
    auto table = synth_generate(p);
    REQUIRE(table.records.size() == 380);
    std::size_t zeros = 0;
    for (const auto& r : table.records)
        if (r.trade.value() == 0.0) ++zeros;
    REQUIRE(zeros == 114);  // round(0.3 * 380), independent of the seed
}

TEST_CASE("synth_generate: argument errors") {
    SynthParams p;
    p.n_countries = 1;
    REQUIRE_THROWS_AS(synth_generate(p), ArgumentError);
}

TEST_CASE("tail_index: Pareto(1) sample recovered, oracle agreement") {
    std::vector<double> medians;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        std::vector<double> sample(100000);
        for (auto& v : sample) v = rng.pareto(1.0);
        auto d = tail_index(sample, 0.01);
        REQUIRE(d.k == 1000);
        REQUIRE(d.alpha_hat == Catch::Approx(oracle::hill(sample, d.k)).epsilon(1e-12));
        medians.push_back(d.alpha_hat);
    }
    std::sort(medians.begin(), medians.end());
    double median = medians[medians.size() / 2];
    REQUIRE(median > 0.9);
    REQUIRE(median < 1.1);
}

TEST_CASE("tail_index: exponential sample signals a thin tail") {
    Rng rng(5);
    std::vector<double> sample(100000);
    for (auto& v : sample) {
        double u = rng.next_double();
        while (u <= 0) u = rng.next_double();
        v = -std::log(u);
    }
    auto d = tail_index(sample, 0.01);
    REQUIRE(d.alpha_hat > 3.0);
}

TEST_CASE("tail_index: Hill consistency across alpha in {0.5, 1, 2}") {
    for (double alpha : {0.5, 1.0, 2.0}) {
        std::vector<double> estimates;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(1000 + seed);
            std::vector<double> sample(100000);
            for (auto& v : sample) v = rng.pareto(alpha);
            estimates.push_back(tail_index(sample, 0.01).alpha_hat);
        }
        std::sort(estimates.begin(), estimates.end());
        double median = estimates[estimates.size() / 2];
        REQUIRE(std::fabs(median - alpha) / alpha < 0.10);
    }
}

TEST_CASE("tail_index: errors") {
    REQUIRE_THROWS_AS(tail_index(std::vector<double>(100, 3.0), 0.1), DegenerateSampleError);
    REQUIRE_THROWS_AS(tail_index({1, 2, 3}, 0.1), InsufficientDataError);
    REQUIRE_THROWS_AS(tail_index(std::vector<double>(100, 3.0), 0.6), ArgumentError);
    std::vector<double> zeros(50, 0.0);
    REQUIRE_THROWS_AS(tail_index(zeros, 0.1), InsufficientDataError);
}

TEST_CASE("log_density: decade-separated values spread equally over 3 bins") {
    auto h = log_density({1.0, 10.0, 100.0}, 3);
    REQUIRE(h.bins.size() == 3);
    for (const auto& b : h.bins) REQUIRE(b.density == Catch::Approx(0.5));
    double mass = 0.0;
    for (const auto& b : h.bins) mass += b.density * h.bin_width;
    REQUIRE(mass == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("log_density: constant sample holds full mass in one bin") {
    auto h = log_density(std::vector<double>(20, 10.0), 5);
    REQUIRE(h.bins.size() == 1);
    REQUIRE(h.bins[0].density * h.bin_width == Catch::Approx(1.0));
}

TEST_CASE("log_density: zeros counted separately; integrates to one") {
    Rng rng(2);
    std::vector<double> values(5000);
    for (auto& v : values) v = rng.pareto(1.0);
    values.resize(5500, 0.0);  // 500 zeros
    auto h = log_density(values, 30);
    REQUIRE(h.zero_count == 500);
    REQUIRE(h.n_positive == 5000);
    double mass = 0.0;
    for (const auto& b : h.bins) mass += b.density * h.bin_width;
    REQUIRE(mass == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("log_density: Pareto(1) log-log slope is about -alpha beyond the mode") {
    Rng rng(3);
    std::vector<double> sample(200000);
    for (auto& v : sample) v = rng.pareto(1.0);
    auto h = log_density(sample, 40);
    // Regress log10(density) on bin start over the populated early tail.
    std::vector<double> xs, ys;
    for (const auto& b : h.bins) {
        if (b.density <= 0 || b.log10_start > 3.0) continue;
        xs.push_back(b.log10_start);
        ys.push_back(std::log10(b.density));
    }
    REQUIRE(xs.size() >= 5);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    double slope = num / den;
    REQUIRE(slope == Catch::Approx(-1.0).margin(0.3));
}

TEST_CASE("log_density: errors") {
    REQUIRE_THROWS_AS(log_density({0.0, 0.0}, 3), InsufficientDataError);
    REQUIRE_THROWS_AS(log_density({1.0}, 0), ArgumentError);
    REQUIRE_THROWS_AS(log_density({-1.0}, 3), ArgumentError);
}
