#include <doctest.h>

#include <algorithm>

#include "agealign/features.hpp"
#include "agealign/io.hpp"
#include "check.hpp"
#include "fixtures.hpp"

using namespace agealign;
using namespace agealign::features;

namespace {

WCQuestion boat_water(std::string explanation) {
    WCQuestion q;
    q.id = "bw";
    q.words = {"boat", "water", "car", "stroller"};
    q.gold = WordPair("boat", "water");
    q.pair_aoa = 6.0;
    q.relation = "location";
    q.explanation = std::move(explanation);
    return q;
}

LMResponse reply(const std::string& id, bool explains) {
    LMResponse r;
    r.question_id = id;
    r.has_explanation = explains;
    return r;
}

}  // namespace

TEST_CASE("pos of gold words in the explanation") {
    const LexiconTagger tagger;
    CHECK(annotate_pos(WordPair("boat", "water"), "a boat floats on water", tagger) == PosPair{"NOUN", "NOUN"});
    CHECK(annotate_pos(WordPair("boat", "water"), "a boat floats", tagger) == PosPair{"NOUN", "X"});
    CHECK(annotate_pos(WordPair("boat", "water"), "", tagger) == PosPair{"X", "X"});
    CHECK(annotate_pos(WordPair("quickly", "run"), "you run quickly", tagger) == PosPair{"ADV", "NOUN"});
    CHECK(annotate_pos(WordPair("happy", "swim"), "we like to swim when happy", tagger) == PosPair{"NOUN", "VERB"});
    CHECK(annotate_pos(WordPair("famous", "walking"), "a famous man is walking", tagger) == PosPair{"ADJ", "VERB"});

    Lexicon lex;
    lex["happy"] = WordEntry{"happy", 3, std::nullopt, "adj", std::nullopt};
    const LexiconTagger with_hints(&lex);
    CHECK(annotate_pos(WordPair("happy", "swim"), "we like to swim when happy", with_hints) == PosPair{"ADJ", "VERB"});
}

TEST_CASE("morph classes and relation difficulty") {
    CHECK(morph_class(0) == MorphClass::Low);
    CHECK(morph_class(1) == MorphClass::Low);
    CHECK(morph_class(2) == MorphClass::Low);
    CHECK(morph_class(3) == MorphClass::Medium);
    CHECK(morph_class(4) == MorphClass::Medium);
    CHECK(morph_class(5) == MorphClass::High);
    CHECK(morph_class(12) == MorphClass::High);
    for (auto m : {MorphClass::Low, MorphClass::Medium, MorphClass::High}) CHECK(parse_morph_class(to_string(m)) == m);

    CHECK_FALSE(relation_hard("synonym"));
    CHECK_FALSE(relation_hard("action"));
    CHECK_FALSE(relation_hard("location"));
    CHECK_FALSE(relation_hard("phrase"));
    CHECK(relation_hard("function"));
    CHECK(relation_hard("unknown"));
    int easy = 0;
    for (const auto& r : known_relations()) easy += relation_hard(r) ? 0 : 1;
    CHECK(easy == 4);
}

TEST_CASE("annotation priorities") {
    const LexiconTagger tagger;
    auto q = boat_water("a boat floats on water");
    auto f = annotate(q, reply("bw", true), tagger);
    CHECK(f.pos_pair == PosPair{"NOUN", "NOUN"});
    CHECK(f.same_pos);
    CHECK_FALSE(f.relation_hard);
    CHECK_FALSE(f.morph.has_value());
    CHECK(f.has_explanation);

    q.features = FeatureAnnotations{std::array<std::string, 2>{"ADJ", "NOUN"}, "high"};
    f = annotate(q, reply("bw", false), tagger);
    CHECK(f.pos_pair == PosPair{"ADJ", "NOUN"});
    CHECK(f.has_adv_or_adj);
    CHECK(f.morph == MorphClass::High);

    PreAnnotation pre{PosPair{"VERB", "NOUN"}, 1};
    f = annotate(q, reply("bw", false), tagger, &pre);
    CHECK(f.pos_pair == PosPair{"VERB", "NOUN"});
    CHECK_FALSE(f.same_pos);
    CHECK(f.morph == MorphClass::Low);

    q.pair_aoa.reset();
    CHECK_ERROR_KIND(annotate(q, reply("bw", false), tagger), ErrorKind::UnknownAoa);
}

TEST_CASE("design rows") {
    FeatureVector f;
    f.question_id = "a";
    f.pos_pair = {"NOUN", "NOUN"};
    f.same_pos = true;
    f.relation = "synonym";
    f.relation_hard = false;
    f.morph = MorphClass::Low;
    f.pair_aoa = 6;
    const auto row = design_row(f, 1);
    CHECK(row.x == std::array<double, 7>{1, 0, 0, 0, 0, 0, 6});
    CHECK(row.error == 0);
    CHECK(design_row(f, 0).error == 1);

    f.has_adv_or_adj = true;
    f.same_pos = false;
    f.relation_hard = true;
    f.morph = MorphClass::Medium;
    f.has_explanation = true;
    CHECK(design_row(f, 1).x == std::array<double, 7>{1, 1, 1, 1, 1, 1, 6});
}

TEST_CASE("design matrix joins, excludes, and permutes purely") {
    std::vector<FeatureVector> fs;
    std::vector<Outcome> os;
    Rng rng(9);
    for (int i = 0; i < 30; ++i) {
        FeatureVector f;
        f.question_id = "q" + std::to_string(i);
        f.same_pos = rng.bernoulli(0.5);
        f.has_adv_or_adj = rng.bernoulli(0.3);
        f.relation_hard = rng.bernoulli(0.5);
        if (i % 7 != 3) f.morph = static_cast<MorphClass>(rng.below(3));
        f.has_explanation = rng.bernoulli(0.5);
        f.pair_aoa = 2 + 16 * rng.uniform();
        fs.push_back(f);
        os.push_back(Outcome{f.question_id, 1, Scorer::Auto, std::nullopt});
    }
    auto dm = build_design_matrix(os, fs);
    CHECK(dm.Y.sum() == 0.0);
    CHECK(dm.excluded.size() == 4);
    CHECK(static_cast<std::size_t>(dm.X.rows()) + dm.excluded.size() == os.size());
    CHECK((dm.X.col(0).array() == 1.0).all());
    for (int c = 1; c < 6; ++c) CHECK((dm.X.col(c).array() * (1 - dm.X.col(c).array()) == 0).all());

    for (std::size_t i = 0; i < os.size(); i += 2) os[i].h = 0;
    dm = build_design_matrix(os, fs);
    auto perm_o = os;
    auto perm_f = fs;
    Rng r2(10);
    r2.shuffle(perm_o);
    r2.shuffle(perm_f);
    const auto pm = build_design_matrix(perm_o, perm_f);
    REQUIRE(pm.ids.size() == dm.ids.size());
    for (std::size_t i = 0; i < pm.ids.size(); ++i) {
        const auto j = static_cast<Eigen::Index>(std::find(dm.ids.begin(), dm.ids.end(), pm.ids[i]) - dm.ids.begin());
        CHECK(pm.X.row(static_cast<Eigen::Index>(i)) == dm.X.row(j));
        CHECK(pm.Y(static_cast<Eigen::Index>(i)) == dm.Y(j));
    }

    auto missing = os;
    missing.push_back(Outcome{"nope", 1, Scorer::Auto, std::nullopt});
    CHECK_ERROR_KIND(build_design_matrix(missing, fs), ErrorKind::Join);
    auto dup = os;
    dup.push_back(os[0]);
    CHECK_ERROR_KIND(build_design_matrix(dup, fs), ErrorKind::Join);
}

TEST_CASE("annotate_all joins by id") {
    const auto qs = fixture::wc_questions(4);
    std::vector<LMResponse> rs = {reply("q2", true), reply("q0", false)};
    const LexiconTagger tagger;
    const auto fs = annotate_all(qs, rs, tagger, {{"q2", PreAnnotation{std::nullopt, 4}}});
    REQUIRE(fs.size() == 2);
    CHECK(fs[0].question_id == "q0");
    CHECK(fs[1].morph == MorphClass::Medium);
    rs.push_back(reply("ghost", false));
    CHECK_ERROR_KIND(annotate_all(qs, rs, tagger, {}), ErrorKind::Join);
}

TEST_CASE("feature rows round trip and pre-annotations load") {
    FeatureVector f;
    f.question_id = "a";
    f.pos_pair = {"ADJ", "NOUN"};
    f.has_adv_or_adj = true;
    f.relation = "category";
    f.morph = MorphClass::High;
    f.pair_aoa = 8.5;
    const auto rec = from_json_row(to_json_row(f, 0));
    CHECK(rec.error == 1);
    CHECK(rec.features.pos_pair == f.pos_pair);
    CHECK(rec.features.morph == f.morph);
    CHECK(rec.features.pair_aoa == f.pair_aoa);
    CHECK(rec.features.relation_hard == f.relation_hard);

    fixture::TempDir dir("pre");
    write_atomic(dir.path / "pre.jsonl",
                 "{\"question_id\":\"a\",\"pos_pair\":[\"NOUN\",\"VERB\"],\"morph_count\":3}\n{\"question_id\":\"b\"}\n");
    const auto pre = load_pre_annotations(dir.path / "pre.jsonl");
    CHECK(pre.at("a").pos_pair == PosPair{"NOUN", "VERB"});
    CHECK(pre.at("a").morph_count == 3);
    CHECK_FALSE(pre.at("b").pos_pair.has_value());
}
