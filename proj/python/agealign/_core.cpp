#include "agealign/builder.hpp"
#include "agealign/exam.hpp"
#include "agealign/gateway.hpp"
#include "agealign/io.hpp"
#include "agealign/report.hpp"
#include "agealign/stats.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace agealign;

namespace {

// Structured results cross the boundary as JSON text; the Python side decodes them.
std::string age_test(const std::vector<std::tuple<double, int, std::optional<int>>>& rows, const std::string& mode,
                     const std::string& test, double mu, std::optional<double> gamma, double alpha,
                     const std::vector<double>& ages) {
    std::vector<stats::AgeItem> items;
    for (const auto& [aoa, h, hh] : rows) items.push_back({aoa, h, hh});
    AgeTestRequest req;
    req.mode = parse_age_mode(mode);
    req.kind = parse_age_test_kind(test);
    req.mu = mu;
    req.gamma = gamma;
    req.alpha = alpha;
    req.ages = ages;
    return age_test_json(items, req).dump();
}

std::string build_wc(const std::filesystem::path& wax, const std::filesystem::path& aoa, std::uint64_t seed,
                     bool overlap_filter) {
    Warnings w;
    const auto lexicon = load_aoa_lexicon(aoa, w);
    const auto records = load_wax(wax, w);
    BuilderConfig cfg;
    cfg.seed = seed;
    cfg.overlap_filter = overlap_filter;
    const auto qs = build_wc_large(records, lexicon, cfg, w);
    return json{{"questions", qs}, {"warnings", w}}.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    static py::exception<Error> error(m, "AgeAlignError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            error((std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def("means_test", [](long r, long n, double mu, double alpha) { return json(stats::means_test(r, n, mu, alpha)).dump(); },
          py::arg("correct"), py::arg("n"), py::arg("mu"), py::arg("alpha") = 0.05);
    m.def("td_test", [](long d, long n, double gamma, double alpha) { return json(stats::td_test(d, n, gamma, alpha)).dump(); },
          py::arg("disagreements"), py::arg("n"), py::arg("gamma"), py::arg("alpha") = 0.05);
    m.def("hoeffding_bound",
          [](double p, long n, double alpha, bool two_sided) {
              const auto b = stats::hoeffding_bound(p, n, alpha, two_sided ? stats::Sided::Two : stats::Sided::One);
              return std::make_pair(b.lower, b.upper);
          },
          py::arg("p_hat"), py::arg("n"), py::arg("alpha") = 0.05, py::arg("two_sided") = true);
    m.def("estimate_human_mean",
          [](bool use_hoeffding) {
              stats::HumanMeanInputs in;
              in.use_hoeffding = use_hoeffding;
              return stats::estimate_human_mean(in);
          },
          py::arg("use_hoeffding") = true);
    m.def("chi2_independence",
          [](const std::vector<std::vector<double>>& table) {
              const auto r = stats::chi2_independence(table);
              return py::make_tuple(r.statistic, r.df, r.p_value);
          },
          py::arg("table"));
    m.def("energy_distance",
          [](const std::vector<int>& a, const std::vector<int>& b, bool include_self_pairs) {
              return stats::energy_distance(a, b, include_self_pairs ? stats::EnergyEstimator::IncludeSelfPairs
                                                                     : stats::EnergyEstimator::ExcludeSelfPairs);
          },
          py::arg("a"), py::arg("b"), py::arg("include_self_pairs") = false);
    m.def("coarsen_k", &stats::coarsen_k, py::arg("n"));
    m.def("extract_answer_wc",
          [](const std::string& text, const std::vector<std::string>& candidates) -> std::optional<std::pair<std::string, std::string>> {
              const auto p = extract_answer_wc(text, candidates);
              if (!p) return std::nullopt;
              return std::make_pair(p->first(), p->second());
          },
          py::arg("text"), py::arg("candidates"));
    m.def("age_test", &age_test, py::arg("items"), py::arg("mode") = "exact", py::arg("test") = "means",
          py::arg("mu") = 0.0, py::arg("gamma") = std::nullopt, py::arg("alpha") = 0.05,
          py::arg("ages") = std::vector<double>{});
    m.def("build_wc", &build_wc, py::arg("wax"), py::arg("aoa"), py::arg("seed"), py::arg("overlap_filter") = true);
    m.def("age_equivalent",
          [](const std::filesystem::path& norms, const std::string& subtest, long raw) {
              return json(lookup_age_equivalent(load_norm_table(norms), subtest, raw)).dump();
          },
          py::arg("norms"), py::arg("subtest"), py::arg("raw_score"));
}
