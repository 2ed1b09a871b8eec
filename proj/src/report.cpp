#include "agealign/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "agealign/error.hpp"
#include "agealign/io.hpp"

namespace agealign {

std::vector<stats::AgeItem> join_age_items(std::span<const json> outcome_rows, std::span<const Question> questions) {
    std::unordered_map<std::string, std::optional<double>> aoa;
    for (const auto& q : questions) aoa[question_id(q)] = question_aoa(q);

    std::vector<stats::AgeItem> items;
    for (const auto& row : outcome_rows) {
        stats::AgeItem item;
        item.h_lm = row.at("h").get<int>();
        if (auto it = row.find("h_human"); it != row.end() && !it->is_null()) item.h_human = it->get<int>();
        if (auto it = row.find("aoa"); it != row.end() && !it->is_null()) {
            item.aoa = it->get<double>();
        } else {
            const auto id = row.at("question_id").get<std::string>();
            auto q = aoa.find(id);
            if (q == aoa.end()) throw Error(ErrorKind::Join, "outcome for unknown question '" + id + "'");
            if (!q->second) continue;
            item.aoa = *q->second;
        }
        items.push_back(item);
    }
    return items;
}

std::vector<double> default_age_grid(std::span<const stats::AgeItem> items) {
    if (items.empty()) throw Error(ErrorKind::InvalidArgument, "no items with a known AoA");
    auto [lo, hi] = std::minmax_element(items.begin(), items.end(),
                                        [](const auto& a, const auto& b) { return a.aoa < b.aoa; });
    std::vector<double> ages;
    for (double a = std::floor(lo->aoa); a <= std::floor(hi->aoa); a += 1.0) ages.push_back(a);
    return ages;
}

double default_human_mean() { return stats::estimate_human_mean({}); }

double default_human_disagreement() {
    const stats::HumanMeanInputs in;
    return stats::hoeffding_bound(in.disagreement_rate, in.n_annotated, in.alpha, stats::Sided::One).upper;
}

json age_test_json(std::span<const stats::AgeItem> items, const AgeTestRequest& request) {
    stats::AgeProfileOptions opt;
    opt.mode = request.mode;
    opt.kind = request.kind;
    const double mu = request.mu > 0.0 ? request.mu : default_human_mean();
    opt.mu = [mu](double) { return mu; };
    opt.gamma = request.gamma.value_or(default_human_disagreement());
    opt.alpha = request.alpha;
    opt.ages = request.ages.empty() ? default_age_grid(items) : request.ages;
    const auto profile = stats::age_profile(items, opt);

    json j = {{"mode", to_string(request.mode)},
              {"test", to_string(request.kind)},
              {"alpha", request.alpha},
              {"rows", profile.rows},
              {"aligned_ages", profile.aligned_ages},
              {"skipped_ages", profile.skipped_ages},
              {"min_aligned_age", profile.min_aligned_age ? json(*profile.min_aligned_age) : json(nullptr)}};
    if (request.kind == AgeTestKind::Means) j["mu"] = mu;
    else j["gamma"] = opt.gamma;
    return j;
}

namespace {

json lpm_json(const stats::LpmFit& fit) {
    json coefs = json::array();
    for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
        coefs.push_back({{"name", features::kRegressorNames[static_cast<std::size_t>(i)]},
                         {"beta", fit.beta(i)},
                         {"robust_se", std::sqrt(fit.robust_covariance(i, i))},
                         {"z", fit.z(i)},
                         {"p_value", fit.p_values(i)},
                         {"adjusted_p_value", fit.adjusted_p_values(i)}});
    }
    return {{"n", fit.n}, {"coefficients", std::move(coefs)}, {"fraction_fitted_outside_unit", fit.fraction_outside_unit}};
}

json chi2_row(const std::string& feature, const std::vector<std::string>& levels,
              const std::vector<std::vector<double>>& table, int n_tests) {
    json j = {{"feature", feature}, {"levels", levels}, {"table", table}};
    try {
        const auto r = stats::chi2_independence(table, n_tests);
        j["statistic"] = r.statistic;
        j["df"] = r.df;
        j["p_value"] = r.p_value;
        j["adjusted_p_value"] = r.adjusted_p;
        j["error_rate"] = json::array();
        for (const auto& row : table) j["error_rate"].push_back(row[1] / (row[0] + row[1]));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Degenerate) throw;
        j["degenerate"] = true;
        j["note"] = e.what();
    }
    return j;
}

}  // namespace

json analysis_json(std::span<const features::DesignRecord> records) {
    std::vector<const features::DesignRecord*> rows;
    std::size_t excluded = 0;
    for (const auto& r : records) {
        if (!r.error) continue;
        if (!r.features.morph) {
            ++excluded;
            continue;
        }
        rows.push_back(&r);
    }
    if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "no design rows with an error label");

    // Rows: feature level; columns: (correct, wrong).
    auto binary = [&](auto pred) {
        std::vector<std::vector<double>> t(2, std::vector<double>(2, 0.0));
        for (const auto* r : rows) t[pred(r->features) ? 1 : 0][*r->error] += 1.0;
        return t;
    };
    std::vector<std::vector<double>> morph(3, std::vector<double>(2, 0.0));
    for (const auto* r : rows) morph[static_cast<std::size_t>(*r->features.morph)][*r->error] += 1.0;

    constexpr int n_chi2 = 5;
    const std::vector<std::string> no_yes = {"no", "yes"};
    json chi2 = json::array();
    chi2.push_back(chi2_row("adv_or_adj", no_yes, binary([](const auto& f) { return f.has_adv_or_adj; }), n_chi2));
    chi2.push_back(chi2_row("distinct_pos", no_yes, binary([](const auto& f) { return !f.same_pos; }), n_chi2));
    chi2.push_back(chi2_row("hard_relation", no_yes, binary([](const auto& f) { return f.relation_hard; }), n_chi2));
    chi2.push_back(chi2_row("morph_class", {"low", "medium", "high"}, morph, n_chi2));
    chi2.push_back(chi2_row("explains", no_yes, binary([](const auto& f) { return f.has_explanation; }), n_chi2));

    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X(n, 7);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = features::design_row(rows[i]->features, 1 - *rows[i]->error);
        for (Eigen::Index c = 0; c < 7; ++c) X(i, c) = row.x[c];
        Y(i) = row.error;
    }
    json lpm;
    try {
        lpm = lpm_json(stats::fit_lpm(X, Y));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Rank) throw;
        lpm = {{"error", e.what()}};
    }
    return {{"n", n}, {"excluded_unknown_morph", excluded}, {"chi2", std::move(chi2)}, {"lpm", std::move(lpm)}};
}

std::string dump_report(const json& j) { return j.dump(2) + "\n"; }

namespace {

json accuracy_series(std::span<const stats::AgeItem> items, std::span<const double> ages, AgeMode mode) {
    json series = json::array();
    for (double age : ages) {
        long n = 0, correct = 0;
        for (const auto& item : items) {
            if (!stats::in_age_bucket(item.aoa, age, mode)) continue;
            ++n;
            correct += item.h_lm;
        }
        if (n == 0) continue;
        series.push_back({{"age", age}, {"accuracy", static_cast<double>(correct) / static_cast<double>(n)}, {"n", n}});
    }
    return series;
}

json p_value_series(const json& age_test) {
    json series = json::array();
    for (const auto& row : age_test.at("rows")) series.push_back({{"age", row.at("age")}, {"p_value", row.at("p_value")}});
    return series;
}

}  // namespace

json render_run_report(const std::filesystem::path& run_dir, const ReportOptions& options) {
    std::vector<std::string> missing;
    for (const char* name : {"questions.jsonl", "responses.jsonl", "outcomes.jsonl"})
        if (!std::filesystem::exists(run_dir / name)) missing.push_back(name);
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(ErrorKind::NotFound, "run directory " + run_dir.string() + " is missing: " + list);
    }

    const auto questions = read_jsonl_as<Question>(run_dir / "questions.jsonl");
    const auto responses = read_jsonl_as<LMResponse>(run_dir / "responses.jsonl");
    const auto outcome_rows = read_jsonl(run_dir / "outcomes.jsonl");

    long correct = 0;
    for (const auto& row : outcome_rows) correct += row.at("h").get<int>();
    const auto items = join_age_items(outcome_rows, questions);
    const auto ages = options.ages.empty() ? default_age_grid(items) : options.ages;
    long explained = 0;
    for (const auto& r : responses) explained += r.has_explanation ? 1 : 0;

    json report;
    report["summary"] = {{"questions", questions.size()},
                         {"responses", responses.size()},
                         {"scored", outcome_rows.size()},
                         {"correct", correct},
                         {"accuracy", outcome_rows.empty() ? 0.0
                                                           : static_cast<double>(correct) /
                                                                 static_cast<double>(outcome_rows.size())},
                         {"with_explanation", explained}};
    report["accuracy_by_age"] = {{"exact", accuracy_series(items, ages, AgeMode::Exact)},
                                 {"at_most", accuracy_series(items, ages, AgeMode::AtMost)}};

    json age_tests = json::object();
    const bool paired = !items.empty() && std::all_of(items.begin(), items.end(), [](const auto& i) {
        return i.h_human.has_value();
    });
    for (AgeMode mode : {AgeMode::Exact, AgeMode::AtMost}) {
        for (AgeTestKind kind : {AgeTestKind::Means, AgeTestKind::TD}) {
            if (kind == AgeTestKind::TD && !paired) continue;
            AgeTestRequest req;
            req.mode = mode;
            req.kind = kind;
            req.mu = options.mu;
            req.alpha = options.alpha;
            req.ages = ages;
            age_tests[to_string(mode) + "_" + to_string(kind)] = age_test_json(items, req);
        }
    }
    report["age_tests"] = age_tests;
    report["min_aligned_age"] = age_tests.at("exact_means").at("min_aligned_age");
    report["p_value_curves"] = json::object();
    for (const auto& [key, test] : age_tests.items()) report["p_value_curves"][key] = p_value_series(test);

    if (std::filesystem::exists(run_dir / "design.jsonl")) {
        std::vector<features::DesignRecord> records;
        for (const auto& j : read_jsonl(run_dir / "design.jsonl")) records.push_back(features::from_json_row(j));
        try {
            report["analysis"] = analysis_json(records);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::InvalidArgument) throw;
            report["analysis"] = {{"error", e.what()}};
        }
    } else {
        report["analysis"] = nullptr;
    }

    if (options.write_files) {
        write_atomic(run_dir / "report.json", dump_report(report));
        write_atomic(run_dir / "plot_accuracy_by_age.json", dump_report(report["accuracy_by_age"]));
        write_atomic(run_dir / "plot_p_values.json", dump_report(report["p_value_curves"]));
    }
    return report;
}

}  // namespace agealign
