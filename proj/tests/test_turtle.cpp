#include <catch2/catch_amalgamated.hpp>

#include "koneco/pipeline.hpp"
#include "koneco/turtle.hpp"
#include "oracles.hpp"

using namespace koneco;

TEST_CASE("serialize: empty set emits only the prefix block") {
    TripleSet empty;
    REQUIRE(turtle::serialize(empty) == "@prefix kg: <http://www.koneco.de/kg#> .\n");
}

TEST_CASE("serialize: single triple renders one sorted statement") {
    TripleSetBuilder b;
    b.add("A", "tradesWith", "B");
    auto text = turtle::serialize(b.build());
    REQUIRE(text ==
            "@prefix kg: <http://www.koneco.de/kg#> .\n"
            "kg:A kg:tradesWith kg:B .\n");
}

TEST_CASE("serialize: line count is prefix lines plus deduplicated triples") {
    TradeTable t;
    for (int i = 0; i < 2; ++i) {
        TradeRecord r;
        r.exporter = i == 0 ? "ARB" : "NZL";
        r.importer = i == 0 ? "NZL" : "ARB";
        r.year = 1990;
        r.trade = 5.0;
        t.records.push_back(r);
    }
    detail::finalize(t);
    auto ts = build_graph(t);
    auto text = turtle::serialize(ts);
    std::size_t lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    REQUIRE(lines == 1 + ts.size());
}

TEST_CASE("serialize: deterministic bytes, illegal label rejected") {
    Rng rng(1);
    auto ts = oracle::random_triple_set(rng, 200);
    REQUIRE(turtle::serialize(ts) == turtle::serialize(ts));

    TripleSetBuilder bad;
    bad.add("white space", "r0", "E0");
    REQUIRE_THROWS_WITH(turtle::serialize(bad.build()),
                        Catch::Matchers::ContainsSubstring("white space"));
}

TEST_CASE("parse round-trips serialize on random graphs") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        auto ts = oracle::random_triple_set(rng, 500);
        auto text = turtle::serialize(ts);
        REQUIRE(turtle::parse(text) == ts);
        REQUIRE(turtle::serialize(turtle::parse(text)) == text);
    }
}

TEST_CASE("parse: semicolon and comma abbreviations expand correctly") {
    auto expanded = turtle::parse(
        "@prefix kg: <http://www.koneco.de/kg#> .\n"
        "kg:A kg:p kg:B .\n"
        "kg:A kg:p kg:C .\n"
        "kg:A kg:q kg:D .\n");
    auto abbreviated = turtle::parse(
        "@prefix kg: <http://www.koneco.de/kg#> .\n"
        "kg:A kg:p kg:B , kg:C ;\n"
        "     kg:q kg:D .\n");
    REQUIRE(abbreviated == expanded);
}

TEST_CASE("parse: comments and blank lines are ignored") {
    auto ts = turtle::parse(
        "@prefix kg: <http://www.koneco.de/kg#> .\n"
        "\n"
        "# a comment line\n"
        "kg:A kg:p kg:B . # trailing comment\n");
    REQUIRE(ts.size() == 1);
}

TEST_CASE("parse: full-IRI terms map into the kg namespace or stay foreign") {
    auto ts = turtle::parse(
        "@prefix kg: <http://www.koneco.de/kg#> .\n"
        "<http://www.koneco.de/kg#A> kg:p <http://example.org/thing> .\n");
    REQUIRE(ts.entity_id("A").has_value());
    REQUIRE(ts.entity_id("http://example.org/thing").has_value());
    // Foreign IRIs re-serialize in angle brackets and round-trip.
    auto text = turtle::serialize(ts);
    REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("<http://example.org/thing>"));
    REQUIRE(turtle::parse(text) == ts);
}

TEST_CASE("parse: truncated statement reports the right line") {
    try {
        turtle::parse(
            "@prefix kg: <http://www.koneco.de/kg#> .\n"
            "kg:A kg:p kg:B .\n"
            "kg:A kg:p\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.line == 3);
    }
}

TEST_CASE("parse: undeclared prefix is named in the error") {
    REQUIRE_THROWS_WITH(turtle::parse("zz:A zz:p zz:B .\n"),
                        Catch::Matchers::ContainsSubstring("zz"));
}

TEST_CASE("parse: garbage input yields positioned syntax errors") {
    REQUIRE_THROWS_AS(turtle::parse("@prefix kg <oops> .\n"), ParseError);
    REQUIRE_THROWS_AS(turtle::parse("kg:A \"literal\" kg:B .\n"), ParseError);
    try {
        turtle::parse("@prefix kg: <http://www.koneco.de/kg#> .\nkg:A kg:p 42 .\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.line == 2);
        REQUIRE(e.col >= 10);
    }
}

TEST_CASE("prefix map must include kg and unique labels") {
    turtle::PrefixMap pm;
    pm.prefixes = {{"ex", "http://example.org/"}};
    TripleSet empty;
    REQUIRE_THROWS_AS(turtle::serialize(empty, pm), ArgumentError);
}
