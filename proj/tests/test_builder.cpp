#include <doctest.h>

#include <set>
#include <sstream>

#include "agealign/builder.hpp"
#include "agealign/io.hpp"
#include "check.hpp"
#include "fixtures.hpp"

using namespace agealign;

namespace {

Lexicon parse_lexicon(const std::string& csv, Warnings& w) {
    std::istringstream in(csv);
    return load_aoa_lexicon(in, w);
}

// Every invariant a builder output must satisfy, checked from scratch.
void check_question(const WCQuestion& q, const Lexicon& lex, const std::set<WordPair>& gold, bool overlap_filter) {
    std::set<std::string> distinct(q.words.begin(), q.words.end());
    CHECK(distinct.size() == 4);
    CHECK(distinct.count(q.gold.first()));
    CHECK(distinct.count(q.gold.second()));
    REQUIRE(q.pair_aoa.has_value());
    CHECK(*q.pair_aoa == std::max(lex.at(q.gold.first()).aoa_years, lex.at(q.gold.second()).aoa_years));
    if (!overlap_filter) return;
    for (const auto& w : q.words) {
        if (q.gold.contains(w)) continue;
        CHECK_FALSE(gold.count(WordPair(w, q.gold.first())));
        CHECK_FALSE(gold.count(WordPair(w, q.gold.second())));
    }
}

}  // namespace

TEST_CASE("lexicon parsing") {
    Warnings w;
    auto lex = parse_lexicon("word,aoa_years\ndog,4.0\n", w);
    REQUIRE(lex.size() == 1);
    CHECK(lex.at("dog").aoa_years == 4.0);
    CHECK(w.empty());

    lex = parse_lexicon("word,aoa_years\nDog,4.0\n", w);
    REQUIRE(find_word(lex, "dog") != nullptr);
    CHECK(find_word(lex, "DOG")->aoa_years == 4.0);

    lex = parse_lexicon("word,aoa_years\ndog,6.0\ndog,4.0\ncat,3\n", w);
    CHECK(lex.at("dog").aoa_years == 4.0);
    CHECK(w.size() == 1);

    lex = parse_lexicon("word,aoa_years,morph_count,pos,definition\nrun,5,3,verb,\"to move, fast\"\n", w);
    CHECK(lex.at("run").morph_feature_count == 3);
    CHECK(lex.at("run").definition == "to move, fast");

    CHECK_ERROR_KIND(parse_lexicon("word,aoa_years\ndog,old\n", w), ErrorKind::Parse);
    CHECK_ERROR_KIND(parse_lexicon("lemma,age\ndog,4\n", w), ErrorKind::Parse);
    try {
        parse_lexicon("word,aoa_years\ncat,3\ndog,x\n", w);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("wax parsing") {
    Warnings w;
    std::istringstream in(
        "cue,association,relation,explanation\ncar,boat,category,\"both move, on things\"\ncar,car,synonym,x\n"
        "sun,hot,weird,x\n");
    const auto recs = load_wax(in, w);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].explanation == "both move, on things");
    CHECK(recs[1].relation == "unknown");
    CHECK(w.size() == 2);
}

TEST_CASE("pair aoa is the max") {
    Warnings w;
    const auto lex = parse_lexicon("word,aoa_years\na,6\nb,9\nc,7\nd,7\n", w);
    CHECK(pair_aoa("a", "b", lex) == 9.0);
    CHECK(pair_aoa("b", "a", lex) == 9.0);
    CHECK(pair_aoa("c", "d", lex) == 7.0);
    CHECK_ERROR_KIND(pair_aoa("a", "zebra", lex), ErrorKind::UnknownAoa);
}

TEST_CASE("wc build structure, determinism, and overlap filter") {
    const auto lex = fixture::lexicon(60);
    const auto recs = fixture::associations(lex, 300);
    std::set<WordPair> gold;
    for (const auto& r : recs) gold.emplace(r.cue, r.association);

    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        BuilderConfig cfg;
        cfg.seed = seed;
        Warnings w1, w2;
        const auto a = build_wc_large(recs, lex, cfg, w1);
        const auto b = build_wc_large(recs, lex, cfg, w2);
        CHECK(to_jsonl(a) == to_jsonl(b));
        CHECK(!a.empty());
        for (const auto& q : a) check_question(q, lex, gold, true);
    }

    // A fully connected pool leaves no legal distractor.
    std::vector<AssociationRecord> clique;
    const std::vector<std::string> ws = {"wa", "wb", "wc", "wd", "we"};
    for (const auto& x : ws)
        for (const auto& y : ws)
            if (x < y) clique.push_back({x, y, "synonym", ""});
    Warnings w;
    BuilderConfig cfg;
    CHECK(build_wc_large(clique, lex, cfg, w).empty());
    CHECK(w.size() == clique.size());
    cfg.overlap_filter = false;
    w.clear();
    CHECK(build_wc_large(clique, lex, cfg, w).size() == clique.size());
}

TEST_CASE("wc build example pair") {
    Warnings w;
    const auto lex = parse_lexicon("word,aoa_years\ncar,4\nboat,5\nwater,3\nstroller,8\nbus,6\nsun,2\nmoon,3\ntree,4\nleaf,5\n", w);
    const std::vector<AssociationRecord> recs = {{"car", "boat", "category", ""},
                                                 {"boat", "water", "location", ""},
                                                 {"car", "stroller", "function", ""},
                                                 {"water", "bus", "thematic", ""},
                                                 {"sun", "moon", "antonym", ""},
                                                 {"tree", "leaf", "part", ""}};
    const auto qs = build_wc_large(recs, lex, BuilderConfig{}, w);
    REQUIRE(!qs.empty());
    CHECK(qs[0].gold == WordPair("car", "boat"));
    CHECK(qs[0].pair_aoa == 5.0);
    for (const auto& word : qs[0].words) CHECK(word != "water");
    for (const auto& word : qs[0].words) CHECK(word != "stroller");
}

TEST_CASE("unknown aoa pairs are skipped") {
    Warnings w;
    const auto lex = parse_lexicon("word,aoa_years\na,1\nb,2\nc,3\nd,4\n", w);
    const std::vector<AssociationRecord> recs = {
        {"a", "b", "synonym", ""}, {"a", "zz", "synonym", ""}, {"c", "d", "synonym", ""}, {"b", "c", "synonym", ""}};
    BuilderConfig cfg;
    cfg.overlap_filter = false;
    const auto qs = build_wc_large(recs, lex, cfg, w);
    CHECK(qs.size() == 3);
    cfg.aoa_required = false;
    const auto all = build_wc_large(recs, lex, cfg, w);
    CHECK(all.size() == 4);
    CHECK_FALSE(all[1].pair_aoa.has_value());
}

TEST_CASE("def build") {
    const auto lex = fixture::lexicon(10);
    Warnings w;
    BuilderConfig cfg;
    cfg.seed = 5;
    const auto qs = build_def_test(lex, cfg, w);
    REQUIRE(qs.size() == 10);
    for (const auto& q : qs) {
        CHECK_NOTHROW(validate(q));
        int hits = 0;
        for (const auto& c : q.choices) hits += c == q.target;
        CHECK(hits == 1);
        CHECK(q.definition == *lex.at(q.target).definition);
    }
    CHECK(to_jsonl(qs) == to_jsonl(build_def_test(lex, cfg, w)));

    Lexicon tiny;
    for (const auto& [k, e] : fixture::lexicon(3)) tiny[k] = e;
    CHECK_ERROR_KIND(build_def_test(tiny, cfg, w), ErrorKind::Build);
}

TEST_CASE("histograms") {
    const std::vector<double> v = {6.0, 6.4, 9.9};
    CHECK(aoa_histogram(v) == std::map<int, std::size_t>{{6, 2}, {9, 1}});
    CHECK(aoa_histogram(std::span<const double>{}).empty());

    // Pair AoA (max) dominates word AoA: its CDF never exceeds the word CDF.
    const auto lex = fixture::lexicon(100, 11);
    const auto recs = fixture::associations(lex, 400, 12);
    Warnings w;
    BuilderConfig cfg;
    cfg.overlap_filter = false;
    const auto qs = build_wc_large(recs, lex, cfg, w);
    const auto pair = aoa_histogram(qs, HistogramKey::Pair, lex);
    const auto word = aoa_histogram(qs, HistogramKey::Word, lex);
    double np = 0, nw = 0;
    for (auto& [k, c] : pair) np += static_cast<double>(c);
    for (auto& [k, c] : word) nw += static_cast<double>(c);
    CHECK(nw == 2 * np);
    double cp = 0, cw = 0;
    bool strict = false;
    for (int age = 0; age <= 20; ++age) {
        cp += pair.count(age) ? static_cast<double>(pair.at(age)) : 0.0;
        cw += word.count(age) ? static_cast<double>(word.at(age)) : 0.0;
        CHECK(cp / np <= cw / nw + 1e-12);
        strict |= cp / np < cw / nw - 1e-9;
    }
    CHECK(strict);
}

TEST_CASE("order by aoa puts unknown last and is stable") {
    std::vector<Question> qs = {FreeQuestion{"a", "", 1, 5.0}, FreeQuestion{"b", "", 1, std::nullopt},
                                FreeQuestion{"c", "", 1, 3.0}, FreeQuestion{"d", "", 1, 5.0}};
    const auto o = order_by_aoa(qs);
    std::vector<std::string> ids;
    for (const auto& q : o) ids.push_back(question_id(q));
    CHECK(ids == std::vector<std::string>{"c", "a", "d", "b"});
}
