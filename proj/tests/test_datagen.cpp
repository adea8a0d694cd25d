#include <set>
#include <sstream>

#include "doctest.h"
#include "prefmem/datagen.hpp"
#include "prefmem/error.hpp"
#include "prefmem/heurdet.hpp"
#include "support.hpp"

using namespace prefmem;

namespace {

const std::vector<TurnRecord>& default_dataset() {
    static const auto records = generate(GenerationSource::defaults(), GenerationCounts{}, 42);
    return records;
}

std::map<std::string, TemplateKind> kinds_by_id(const GenerationSource& src) {
    std::map<std::string, TemplateKind> out;
    for (const auto& t : src.templates) out[t.id] = t.kind;
    return out;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("default source") {
    const auto src = GenerationSource::defaults();
    CHECK(src.topics.topics.size() == 90);
    CHECK(src.topics.categories().size() >= 4);
    const auto cap = capacity(src);
    CHECK(cap.preference >= 3537);
    CHECK(cap.non_preference >= 4915);
    std::set<TemplateKind> kinds;
    for (const auto& t : src.templates) {
        kinds.insert(t.kind);
        CHECK(t.label == label_of(t.kind));
    }
    CHECK(kinds.size() == 4);
}

TEST_CASE("default counts and label histogram") {
    const auto& records = default_dataset();
    REQUIRE(records.size() == 8452);
    std::size_t pos = 0;
    std::set<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].id == static_cast<std::int64_t>(i));
        pos += records[i].label;
        pairs.insert({records[i].agent, records[i].user});
        CHECK((records[i].category.has_value() ? records[i].label == 1 : true));
    }
    CHECK(pos == 3537);
    CHECK(pairs.size() == records.size());
}

TEST_CASE("small and degenerate counts") {
    const auto src = GenerationSource::defaults();
    const auto only_neutral = generate(src, {0, 5}, 1);
    CHECK(only_neutral.size() == 5);
    for (const auto& r : only_neutral) CHECK(r.label == 0);
    CHECK(generate(src, {0, 0}, 1).empty());
    const auto cap = capacity(src);
    CHECK_THROWS_AS(generate(src, {cap.preference + 1, 0}, 1), DataError);
}

TEST_CASE("same seed gives identical records, different seed differs") {
    const auto src = GenerationSource::defaults();
    const auto a = generate(src, {50, 50}, 9);
    CHECK(a == generate(src, {50, 50}, 9));
    CHECK(a != generate(src, {50, 50}, 10));
    std::ostringstream x, y;
    write_jsonl(a, x);
    write_jsonl(generate(src, {50, 50}, 9), y);
    CHECK(x.str() == y.str());
}

TEST_CASE("JSONL round-trip and errors") {
    const auto records = generate(GenerationSource::defaults(), {20, 20}, 3);
    std::ostringstream out;
    write_jsonl(records, out);
    std::istringstream in(out.str());
    CHECK(read_jsonl(in) == records);

    auto expect_line = [](const std::string& text, std::size_t line) {
        std::istringstream bad(text);
        try {
            read_jsonl(bad);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos);
        }
    };
    const std::string good = R"({"id":0,"topic":"jazz","template_id":"x","agent":"a","user":"b","label":0,"category":null})";
    expect_line(good + "\n{not json\n", 2);
    expect_line(R"({"id":0,"topic":"jazz","template_id":"x","agent":"a","user":"b","label":2,"category":null})", 1);
    expect_line(R"({"id":0,"topic":"jazz","template_id":"x","agent":"a","label":1,"category":null})", 1);
    CHECK_THROWS_AS(read_jsonl(std::filesystem::path("/nonexistent/data.jsonl")), MissingArtifact);
}

TEST_CASE("template parse errors carry line numbers") {
    CHECK_THROWS_AS(parse_templates("nope\n"), DataError);
    CHECK_THROWS_AS(parse_templates(""), DataError);
    const std::string header = "prefmem-templates v1\n";
    CHECK_THROWS_AS(parse_templates(header + "a | explicit-preference | 0 | formal | - | x | y\n"), DataError);
    CHECK_THROWS_AS(parse_templates(header + "a | explicit-preference | 1 | formal | - | {nope} | y\n"), DataError);
    CHECK_THROWS_AS(parse_templates(header + "a | explicit-preference | 1 | formal | - | x\n"), DataError);
    const auto ok = parse_templates(header + "a | neutral-chitchat | 0 | casual | - | Hi {topic} | ok\n");
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].style == "casual");
    CHECK(ok[0].uses("topic"));
}

TEST_CASE("neutral-definition records state no preference") {
    const auto src = GenerationSource::defaults();
    const auto kinds = kinds_by_id(src);
    const auto rules = RuleSet::defaults();
    std::size_t checked = 0;
    for (const auto& r : default_dataset()) {
        if (kinds.at(r.template_id) != TemplateKind::NeutralDefinition) continue;
        ++checked;
        CHECK_MESSAGE(!detect(rules, r.user).is_preference(), r.user);
    }
    CHECK(checked > 0);
}

TEST_CASE("category corpus examples") {
    const auto src = GenerationSource::defaults();
    const CategoryCorpusSpec spec{.num_categories = 4, .gaps = {3, 5}, .sequences_per_gap = 10, .length = 12};
    const auto corpus = make_category_corpus(src, spec, 5);
    REQUIRE(corpus.size() == 20);
    const auto cats = src.topics.categories();
    for (const auto& s : corpus) {
        REQUIRE(s.turns.size() == 12);
        for (std::size_t t = 0; t < 12; ++t) {
            const bool pref = (t + 1) % s.gap == 0;
            CHECK(s.targets[t].has_value() == pref);
            CHECK(s.turns[t].label == (pref ? 1 : 0));
            if (pref) {
                CHECK(*s.targets[t] < 4);
                REQUIRE(s.turns[t].category.has_value());
                CHECK(*s.turns[t].category == cats[*s.targets[t]]);
            }
        }
    }
    CHECK(corpus.front().gap == 3);
    CHECK(corpus.back().gap == 5);

    const auto again = make_category_corpus(src, spec, 5);
    CHECK(again.front().turns == corpus.front().turns);

    CategoryCorpusSpec zero = spec;
    zero.gaps = {0};
    CHECK_THROWS_AS(make_category_corpus(src, zero, 5), DataError);
    CategoryCorpusSpec many = spec;
    many.num_categories = 1000;
    CHECK_THROWS_AS(make_category_corpus(src, many, 5), DataError);
}

TEST_CASE("enumeration covers every generated record") {
    const auto src = GenerationSource::defaults();
    const auto all = enumerate_records(src);
    std::set<std::pair<std::string, std::string>> universe;
    for (const auto& r : all) universe.insert({r.agent, r.user});
    CHECK(universe.size() == all.size());
    const auto cap = capacity(src);
    CHECK(all.size() <= cap.preference + cap.non_preference);
    for (const auto& r : default_dataset()) CHECK(universe.count({r.agent, r.user}) == 1);
}

TEST_CASE("render_turn") {
    TurnRecord r;
    r.agent = "Hi.";
    r.user = "I love jazz.";
    CHECK(render_turn(r) == "Agent: Hi.\nUser: I love jazz.");
}

}  // TEST_SUITE
