#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "agealign/exam.hpp"
#include "agealign/io.hpp"
#include "agealign/report.hpp"
#include "check.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace agealign;

namespace {

// Writes questions/responses/outcomes for a scripted run; returns the outcome rows.
std::vector<json> write_run(const std::filesystem::path& dir, const std::vector<Question>& qs,
                            const std::vector<int>& correct, bool with_human = false) {
    auto lm = fixture::scripted(qs, correct);
    const auto responses = ask_all(*lm, builtin_protocol("SLP"), qs, SamplingConfig{}, 2);
    std::vector<json> rows;
    std::string text;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        json row = {{"question_id", question_id(qs[i])}, {"h", auto_score(qs[i], responses[i])}, {"scorer", "auto"}};
        if (with_human) row["h_human"] = static_cast<int>(i % 3 != 0);
        rows.push_back(row);
        text += row.dump() + "\n";
    }
    write_atomic(dir / "questions.jsonl", to_jsonl(qs));
    write_atomic(dir / "responses.jsonl", to_jsonl(responses));
    write_atomic(dir / "outcomes.jsonl", text);
    return rows;
}

}  // namespace

TEST_CASE("all-correct run has accuracy one at every age") {
    fixture::TempDir dir("rep1");
    const auto qs = fixture::wc_questions(80);
    write_run(dir.path, qs, std::vector<int>(qs.size(), 1));
    const auto rep = render_run_report(dir.path);
    CHECK(rep.at("summary").at("accuracy") == 1.0);
    for (const char* mode : {"exact", "at_most"}) {
        REQUIRE(!rep.at("accuracy_by_age").at(mode).empty());
        for (const auto& pt : rep.at("accuracy_by_age").at(mode)) CHECK(pt.at("accuracy") == 1.0);
    }
    CHECK(rep.contains("min_aligned_age"));
    CHECK(rep.at("analysis").is_null());
    CHECK(std::filesystem::exists(dir.path / "report.json"));
    CHECK(std::filesystem::exists(dir.path / "plot_accuracy_by_age.json"));
    CHECK(std::filesystem::exists(dir.path / "plot_p_values.json"));
}

TEST_CASE("accuracy series matches a direct count") {
    fixture::TempDir dir("rep2");
    const auto qs = fixture::wc_questions(200, 8);
    const auto correct = fixture::planted_profile(qs, 9.0, 0.1, 3);
    write_run(dir.path, qs, correct);
    const auto rep = render_run_report(dir.path, {.write_files = false});
    for (const auto& pt : rep.at("accuracy_by_age").at("at_most")) {
        const double age = pt.at("age");
        double n = 0, c = 0;
        for (std::size_t i = 0; i < qs.size(); ++i)
            if (std::floor(*question_aoa(qs[i])) <= age) {
                n += 1;
                c += correct[i];
            }
        CHECK(pt.at("n") == n);
        CHECK(pt.at("accuracy").get<double>() == doctest::Approx(c / n));
    }
    CHECK(rep.at("age_tests").contains("exact_means"));
    CHECK_FALSE(rep.at("age_tests").contains("exact_td"));
}

TEST_CASE("paired outcomes add the disagreement tests") {
    fixture::TempDir dir("rep3");
    const auto qs = fixture::wc_questions(60);
    write_run(dir.path, qs, std::vector<int>(qs.size(), 1), true);
    const auto rep = render_run_report(dir.path, {.write_files = false});
    CHECK(rep.at("age_tests").contains("exact_td"));
    CHECK(rep.at("age_tests").contains("at_most_td"));
    CHECK(rep.at("age_tests").at("exact_td").at("gamma") == doctest::Approx(default_human_disagreement()));
}

TEST_CASE("report bytes are deterministic") {
    fixture::TempDir dir("rep4");
    const auto qs = fixture::wc_questions(50);
    write_run(dir.path, qs, fixture::planted_profile(qs, 10, 0.05, 1));
    render_run_report(dir.path);
    const auto first = read_text(dir.path / "report.json");
    render_run_report(dir.path);
    CHECK(read_text(dir.path / "report.json") == first);
}

TEST_CASE("missing inputs are listed") {
    fixture::TempDir dir("rep5");
    write_atomic(dir.path / "questions.jsonl", "");
    try {
        render_run_report(dir.path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotFound);
        const std::string msg = e.what();
        CHECK(msg.find("responses.jsonl") != std::string::npos);
        CHECK(msg.find("outcomes.jsonl") != std::string::npos);
        CHECK(msg.find("questions.jsonl") == std::string::npos);
    }
}

TEST_CASE("age-test section matches the command line output byte for byte") {
    fixture::TempDir dir("rep6");
    const auto qs = fixture::wc_questions(120, 4);
    write_run(dir.path, qs, fixture::planted_profile(qs, 9.0, 0.05, 2));
    const auto rep = render_run_report(dir.path, {.write_files = false});
    for (const char* mode : {"exact", "at_most"}) {
        const auto items = join_age_items(read_jsonl(dir.path / "outcomes.jsonl"), qs);
        AgeTestRequest req;
        req.mode = parse_age_mode(mode);
        CHECK(dump_report(age_test_json(items, req)) ==
              dump_report(rep.at("age_tests").at(std::string(mode) + "_means")));
#ifdef AGEALIGN_CLI_PATH
        const auto out = dir.path / (std::string("cli_") + mode + ".json");
        const std::string cmd = std::string("\"") + AGEALIGN_CLI_PATH + "\" age-test --outcomes \"" +
                                (dir.path / "outcomes.jsonl").string() + "\" --questions \"" +
                                (dir.path / "questions.jsonl").string() + "\" --mode " + mode +
                                " --test means --out \"" + out.string() + "\"";
        REQUIRE(std::system(cmd.c_str()) == 0);
        CHECK(read_text(out) == dump_report(rep.at("age_tests").at(std::string(mode) + "_means")));
#endif
    }
}

TEST_CASE("join_age_items") {
    const auto qs = fixture::wc_questions(3);
    std::vector<json> rows = {{{"question_id", "q0"}, {"h", 1}},
                              {{"question_id", "q1"}, {"h", 0}, {"aoa", 4.5}, {"h_human", 1}}};
    auto items = join_age_items(rows, qs);
    REQUIRE(items.size() == 2);
    CHECK(items[0].aoa == *question_aoa(qs[0]));
    CHECK(items[1].aoa == 4.5);
    CHECK(items[1].h_human == 1);
    rows.push_back({{"question_id", "ghost"}, {"h", 1}});
    CHECK_ERROR_KIND(join_age_items(rows, qs), ErrorKind::Join);
    CHECK_ERROR_KIND(default_age_grid(std::vector<stats::AgeItem>{}), ErrorKind::InvalidArgument);
    const std::vector<stats::AgeItem> span = {{2.5, 1, {}}, {5.9, 1, {}}};
    CHECK(default_age_grid(span) == std::vector<double>{2, 3, 4, 5});
}

TEST_CASE("analysis section agrees with independent oracles") {
    Rng rng(21);
    std::vector<features::DesignRecord> recs;
    for (int i = 0; i < 400; ++i) {
        features::DesignRecord r;
        auto& f = r.features;
        f.question_id = "q" + std::to_string(i);
        f.has_adv_or_adj = rng.bernoulli(0.3);
        f.same_pos = rng.bernoulli(0.6);
        f.relation_hard = rng.bernoulli(0.5);
        if (i % 50 != 0) f.morph = static_cast<features::MorphClass>(rng.below(3));
        f.has_explanation = rng.bernoulli(0.4);
        f.pair_aoa = 2 + 16 * rng.uniform();
        const double p = 0.2 + 0.2 * f.relation_hard + 0.01 * f.pair_aoa;
        r.error = rng.bernoulli(p) ? 1 : 0;
        recs.push_back(r);
    }
    const auto a = analysis_json(recs);
    CHECK(a.at("excluded_unknown_morph") == 8);
    CHECK(a.at("n") == 392);

    std::vector<std::vector<double>> X;
    std::vector<double> Y;
    std::vector<std::vector<double>> hard(2, std::vector<double>(2, 0));
    for (const auto& r : recs) {
        if (!r.features.morph) continue;
        const auto& f = r.features;
        X.push_back({1, double(f.has_adv_or_adj), double(!f.same_pos), double(f.relation_hard),
                     double(*f.morph != features::MorphClass::Low), double(f.has_explanation), f.pair_aoa});
        Y.push_back(*r.error);
        hard[f.relation_hard][*r.error] += 1;
    }
    const auto ols = oracle::ols_hc0(X, Y);
    const auto& coefs = a.at("lpm").at("coefficients");
    REQUIRE(coefs.size() == 7);
    for (std::size_t k = 0; k < 7; ++k) {
        CHECK(coefs[k].at("beta").get<double>() == doctest::Approx(ols.beta[k]).epsilon(1e-9));
        CHECK(coefs[k].at("robust_se").get<double>() == doctest::Approx(std::sqrt(ols.cov[k][k])).epsilon(1e-9));
    }
    const auto c2 = oracle::chi2(hard);
    const auto& row = a.at("chi2").at(2);
    CHECK(row.at("feature") == "hard_relation");
    CHECK(row.at("statistic").get<double>() == doctest::Approx(c2.statistic).epsilon(1e-9));
    CHECK(row.at("p_value").get<double>() == doctest::Approx(c2.p).epsilon(1e-9));
    CHECK(row.at("adjusted_p_value").get<double>() == doctest::Approx(std::min(1.0, 5 * c2.p)).epsilon(1e-9));
}
