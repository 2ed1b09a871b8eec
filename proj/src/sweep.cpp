// Prompt/parameter sweep: every configuration on the same question sample.
#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "agealign/exam.hpp"

namespace agealign {

namespace {

PromptProtocol protocol_from_json(const json& j) {
    if (j.is_string()) return builtin_protocol(j.get<std::string>());
    PromptProtocol p;
    p.name = j.at("name").get<std::string>();
    if (auto it = j.find("template"); it != j.end()) p.template_text = it->get<std::string>();
    else p = builtin_protocol(p.name);
    return p;
}

std::vector<double> number_list(const json& j, const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return {fallback};
    if (it->is_array()) return it->get<std::vector<double>>();
    return {it->get<double>()};
}

std::string config_label(const PromptProtocol& p, const SamplingConfig& s) {
    std::ostringstream os;
    os << p.name << "/top_p=" << s.top_p << "/temp=" << s.temperature;
    return os.str();
}

}  // namespace

std::vector<SweepConfig> parse_sweep_grid(const json& grid) {
    std::vector<PromptProtocol> protocols;
    if (auto it = grid.find("protocols"); it != grid.end()) {
        for (const auto& p : *it) protocols.push_back(protocol_from_json(p));
    } else {
        for (const auto& name : builtin_protocol_names()) protocols.push_back(builtin_protocol(name));
    }

    std::vector<SamplingConfig> samplings;
    if (auto it = grid.find("sampling"); it != grid.end()) {
        for (const auto& s : *it) samplings.push_back(s.get<SamplingConfig>());
    } else {
        const SamplingConfig base;
        const std::string model = grid.value("model_id", base.model_id);
        const int max_tokens = grid.value("max_tokens", base.max_tokens);
        for (double top_p : number_list(grid, "top_p", base.top_p))
            for (double temperature : number_list(grid, "temperature", base.temperature))
                samplings.push_back(SamplingConfig{model, top_p, temperature, max_tokens});
    }
    if (protocols.empty() || samplings.empty()) throw Error(ErrorKind::InvalidArgument, "sweep grid is empty");

    std::vector<SweepConfig> out;
    for (const auto& p : protocols)
        for (const auto& s : samplings) {
            s.validate();
            out.push_back(SweepConfig{config_label(p, s), p, s});
        }
    return out;
}

SweepResult run_sweep(std::span<const Question> questions, std::span<const SweepConfig> configs, LanguageModel& lm,
                      int parallel_configs) {
    if (questions.empty()) throw Error(ErrorKind::InvalidArgument, "no questions to sweep");
    if (configs.empty()) throw Error(ErrorKind::InvalidArgument, "sweep grid is empty");

    SweepResult result;
    result.rows.resize(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < configs.size(); c = next++) {
            auto& row = result.rows[c];
            row.label = configs[c].label;
            row.protocol = configs[c].protocol.name;
            row.sampling = configs[c].sampling;
            const auto run = run_subtest(questions, configs[c].protocol, configs[c].sampling, 0, lm, 1);
            if (run.aborted_kind) {
                row.error = std::string(to_string(*run.aborted_kind)) + ": " + run.aborted_message;
                continue;
            }
            row.n = static_cast<long>(run.outcomes.size());
            row.correct = run.raw_score;
            row.score = static_cast<double>(row.correct) / static_cast<double>(row.n);
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, parallel_configs)), 1,
                                                       configs.size());
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    }

    std::vector<std::vector<double>> table;
    std::vector<double> scores;
    for (const auto& row : result.rows) {
        if (row.error) {
            result.flagged.push_back(row.label);
            continue;
        }
        scores.push_back(row.score);
        table.push_back({static_cast<double>(row.correct), static_cast<double>(row.n - row.correct)});
    }
    if (!scores.empty()) {
        double sum = 0.0;
        for (double s : scores) sum += s;
        result.mean_score = sum / static_cast<double>(scores.size());
        double ss = 0.0;
        for (double s : scores) ss += (s - result.mean_score) * (s - result.mean_score);
        result.score_std_dev = std::sqrt(ss / static_cast<double>(scores.size()));
    }

    // A column with no counts (every config perfect, or every config at zero)
    // carries no information about association; the table reduces to one column.
    const bool any_correct = std::any_of(table.begin(), table.end(), [](const auto& r) { return r[0] > 0; });
    const bool any_wrong = std::any_of(table.begin(), table.end(), [](const auto& r) { return r[1] > 0; });
    if (table.size() < 2 || !any_correct || !any_wrong) {
        result.chi2_degenerate = true;
        result.chi2.statistic = 0.0;
        result.chi2.df = 0;
        result.chi2.p_value = 1.0;
        result.chi2.adjusted_p = 1.0;
    } else {
        result.chi2 = stats::chi2_independence(table);
    }
    return result;
}

void to_json(json& j, const SweepResult& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json rj = {{"label", row.label},
                   {"protocol", row.protocol},
                   {"sampling", row.sampling},
                   {"correct", row.correct},
                   {"n", row.n},
                   {"score", row.score}};
        rj["error"] = row.error ? json(*row.error) : json(nullptr);
        rows.push_back(std::move(rj));
    }
    j = json{{"configs", std::move(rows)},
             {"mean_score", r.mean_score},
             {"score_std_dev", r.score_std_dev},
             {"chi2",
              {{"statistic", r.chi2.statistic},
               {"df", r.chi2.df},
               {"p_value", r.chi2.p_value},
               {"degenerate", r.chi2_degenerate}}},
             {"flagged", r.flagged}};
}

}  // namespace agealign
