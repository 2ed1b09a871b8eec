// agealign command-line tool.
#include "agealign/builder.hpp"
#include "agealign/exam.hpp"
#include "agealign/features.hpp"
#include "agealign/io.hpp"
#include "agealign/report.hpp"
#include "agealign/service.hpp"
#include "agealign/stats.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that breaks Eigen's headers.
#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace agealign;
namespace fs = std::filesystem;

namespace {

struct ModelOptions {
    std::string model = "text-davinci-002";
    std::string stub;
    std::string base_url = "https://api.openai.com";
    double top_p = 0.95;
    double temperature = 1.0;
    int max_tokens = 256;
    int concurrency = 4;

    void add(CLI::App* cmd) {
        cmd->add_option("--model", model, "Model id sent to the endpoint");
        cmd->add_option("--stub", stub, "JSONL of canned responses; replaces the HTTP endpoint");
        cmd->add_option("--base-url", base_url, "Completion endpoint base URL");
        cmd->add_option("--top-p", top_p);
        cmd->add_option("--temperature", temperature);
        cmd->add_option("--max-tokens", max_tokens);
        cmd->add_option("--concurrency", concurrency, "Requests in flight when no ceiling applies");
    }

    SamplingConfig sampling() const {
        SamplingConfig s{model, top_p, temperature, max_tokens};
        s.validate();
        return s;
    }

    std::shared_ptr<LanguageModel> endpoint() const {
        if (!stub.empty()) return std::make_shared<StubLanguageModel>(stub);
        HttpEndpointConfig cfg;
        cfg.base_url = base_url;
        return std::make_shared<HttpLanguageModel>(cfg);
    }
};

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        try {
            out.push_back(std::stod(part));
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidArgument, "not a number: '" + part + "'");
        }
    }
    return out;
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") std::cout << text;
    else write_atomic(out, text);
}

void print_warnings(const Warnings& w) {
    for (const auto& line : w) std::cerr << "warning: " << line << '\n';
}

json outcome_row(const Outcome& o, const Question& q) {
    json j = o;
    const auto aoa = question_aoa(q);
    j["aoa"] = aoa ? json(*aoa) : json(nullptr);
    return j;
}

std::vector<stats::AgeItem> load_items(const std::string& outcomes, const std::string& questions) {
    const auto rows = read_jsonl(fs::path(outcomes));
    std::vector<Question> qs;
    if (!questions.empty()) qs = read_jsonl_as<Question>(questions);
    return join_age_items(rows, qs);
}

std::vector<std::vector<double>> load_embeddings(const fs::path& path) {
    const auto text = read_text(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    std::vector<std::vector<double>> out;
    if (first != std::string::npos && text[first] == '[' && text.find('\n', first) == std::string::npos) {
        out = json::parse(text).get<std::vector<std::vector<double>>>();
    } else if (first != std::string::npos && text[first] == '[') {
        // One JSON array per line, or a single pretty-printed array of arrays.
        try {
            out = json::parse(text).get<std::vector<std::vector<double>>>();
        } catch (const json::exception&) {
            for (const auto& j : read_jsonl(path)) out.push_back(j.get<std::vector<double>>());
        }
    } else {
        for (const auto& j : read_jsonl(path)) out.push_back(j.at("embedding").get<std::vector<double>>());
    }
    return out;
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Age-alignment evaluation of language models"};
    app.require_subcommand(1);

    // build
    auto* build = app.add_subcommand("build", "Build question sets from a lexicon");
    build->require_subcommand(1);
    std::string wax_path, aoa_path, build_out;
    BuilderConfig bcfg;
    bool no_overlap = false;
    auto* build_wc = build->add_subcommand("wc", "Word-classes questions from association records");
    build_wc->add_option("--wax", wax_path, "CSV: cue,association,relation,explanation")->required();
    build_wc->add_option("--aoa", aoa_path, "CSV: word,aoa_years[,morph_count,pos,definition]")->required();
    build_wc->add_option("--seed", bcfg.seed)->required();
    build_wc->add_option("--distractors", bcfg.n_distractors);
    build_wc->add_flag("--no-overlap-filter", no_overlap);
    build_wc->add_option("--out", build_out)->required();
    auto* build_def = build->add_subcommand("def", "Definition questions from lexicon definitions");
    build_def->add_option("--aoa", aoa_path)->required();
    build_def->add_option("--seed", bcfg.seed)->required();
    build_def->add_option("--out", build_out)->required();

    // administer
    auto* administer = app.add_subcommand("administer", "Ask and auto-score a question set");
    std::string q_path, protocol_name = "SLP", adm_out, responses_out, order = "given";
    int ceiling = 4;
    ModelOptions mopt;
    administer->add_option("--questions", q_path)->required();
    administer->add_option("--protocol", protocol_name, "SLP, QA, or Comp");
    administer->add_option("--ceiling", ceiling, "Consecutive errors before stopping; 0 disables");
    administer->add_option("--order", order, "given or aoa")->check(CLI::IsMember({"given", "aoa"}));
    administer->add_option("--out", adm_out, "Outcomes JSONL")->required();
    administer->add_option("--responses", responses_out, "Responses JSONL (default: <out>.responses.jsonl)");
    mopt.add(administer);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Score every prompt/parameter configuration on one sample");
    std::string grid_path, sweep_out;
    int sweep_parallel = 4;
    sweep->add_option("--questions", q_path)->required();
    sweep->add_option("--grid", grid_path)->required();
    sweep->add_option("--parallel", sweep_parallel);
    sweep->add_option("--out", sweep_out);
    mopt.add(sweep);

    // age
    auto* age = app.add_subcommand("age", "Norm-table age equivalent for a raw score");
    std::string norms_path, subtest;
    long raw = 0;
    age->add_option("--norms", norms_path)->required();
    age->add_option("--subtest", subtest)->required();
    age->add_option("--score", raw)->required();

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Question/response features and design rows");
    std::string resp_path, pre_path, outcomes_path, ann_out, lexicon_path;
    annotate->add_option("--questions", q_path)->required();
    annotate->add_option("--responses", resp_path)->required();
    annotate->add_option("--pre", pre_path, "Pre-annotations JSONL (pos_pair, morph_count)");
    annotate->add_option("--outcomes", outcomes_path, "Adds the error label to each row");
    annotate->add_option("--lexicon", lexicon_path, "AoA CSV whose pos column guides the fallback tagger");
    annotate->add_option("--out", ann_out)->required();

    // age-test
    auto* age_test = app.add_subcommand("age-test", "Per-age means or TD tests");
    std::string mode = "exact", test = "means", mu_arg = "auto", gamma_arg = "auto", ages_arg, at_out;
    double alpha = 0.05;
    age_test->add_option("--outcomes", outcomes_path, "JSONL with question_id, h, aoa (and h_human for td)")
        ->required();
    age_test->add_option("--questions", q_path, "Supplies AoA when outcome rows lack it");
    age_test->add_option("--mode", mode)->check(CLI::IsMember({"exact", "at_most"}));
    age_test->add_option("--test", test)->check(CLI::IsMember({"means", "td"}));
    age_test->add_option("--mu", mu_arg);
    age_test->add_option("--gamma", gamma_arg);
    age_test->add_option("--alpha", alpha);
    age_test->add_option("--ages", ages_arg, "Comma-separated age grid");
    age_test->add_option("--out", at_out);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Chi-square battery and linear probability model");
    std::string design_path, an_out;
    analyze->add_option("--design", design_path)->required();
    analyze->add_option("--out", an_out);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Agreement-controlled human simulation");
    std::string rho_arg = "0,0.25,0.5,0.75,1", sim_out;
    stats::SimulationOptions sopt;
    double sim_mu = 0.0;
    simulate->add_option("--outcomes", outcomes_path)->required();
    simulate->add_option("--questions", q_path);
    simulate->add_option("--rho-grid", rho_arg);
    simulate->add_option("--trials", sopt.trials);
    simulate->add_option("--seed", sopt.seed);
    simulate->add_option("--mu", sim_mu, "Human mean; default from the annotation inputs");
    simulate->add_option("--mode", mode)->check(CLI::IsMember({"exact", "at_most"}));
    simulate->add_option("--ages", ages_arg);
    simulate->add_option("--alpha", sopt.alpha);
    simulate->add_option("--out", sim_out);

    // energy
    auto* energy = app.add_subcommand("energy", "Discrete energy distance between two embedding sets");
    std::string emb_a, emb_b, estimator = "u";
    std::uint64_t energy_seed = 0;
    energy->add_option("--embeddings-a", emb_a)->required();
    energy->add_option("--embeddings-b", emb_b)->required();
    energy->add_option("--seed", energy_seed);
    energy->add_option("--estimator", estimator, "u excludes self-pairs, v includes them")
        ->check(CLI::IsMember({"u", "v"}));

    // report
    auto* report = app.add_subcommand("report", "Render report.json for a run directory");
    std::string run_dir;
    report->add_option("--run", run_dir)->required();
    report->add_option("--alpha", alpha);

    // serve
    auto* serve = app.add_subcommand("serve", "Clinician session HTTP API");
    std::string data_dir, host = "127.0.0.1", token_env = "AGEALIGN_SERVICE_TOKEN";
    int port = 8080;
    serve->add_option("--data", data_dir)->required();
    serve->add_option("--port", port);
    serve->add_option("--host", host);
    serve->add_option("--norms", norms_path);
    serve->add_option("--token-env", token_env, "Environment variable holding the bearer token");
    mopt.add(serve);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*build_wc) {
            Warnings w;
            auto lexicon = load_aoa_lexicon(fs::path(aoa_path), w);
            auto records = load_wax(fs::path(wax_path), w);
            bcfg.overlap_filter = !no_overlap;
            const auto qs = build_wc_large(records, lexicon, bcfg, w);
            print_warnings(w);
            write_atomic(build_out, to_jsonl(std::vector<Question>(qs.begin(), qs.end())));
            std::cerr << qs.size() << " questions\n";
        } else if (*build_def) {
            Warnings w;
            auto lexicon = load_aoa_lexicon(fs::path(aoa_path), w);
            const auto qs = build_def_test(lexicon, bcfg, w);
            print_warnings(w);
            write_atomic(build_out, to_jsonl(std::vector<Question>(qs.begin(), qs.end())));
            std::cerr << qs.size() << " questions\n";
        } else if (*administer) {
            auto qs = read_jsonl_as<Question>(q_path);
            if (order == "aoa") qs = order_for_ceiling(qs);
            auto lm = mopt.endpoint();
            const auto run = run_subtest(qs, builtin_protocol(protocol_name), mopt.sampling(), ceiling, *lm,
                                         mopt.concurrency);
            std::string outcomes_text;
            for (std::size_t i = 0; i < run.outcomes.size(); ++i)
                outcomes_text += outcome_row(run.outcomes[i], qs[i]).dump() + "\n";
            write_atomic(adm_out, outcomes_text);
            if (responses_out.empty()) responses_out = fs::path(adm_out).replace_extension(".responses.jsonl").string();
            write_atomic(responses_out, to_jsonl(run.responses));
            std::cout << json{{"scored", run.outcomes.size()},
                              {"raw_score", run.raw_score},
                              {"stopped_early", run.stopped_early}}
                             .dump()
                      << '\n';
            if (run.aborted_kind) {
                std::cerr << "error[" << to_string(*run.aborted_kind) << "]: " << run.aborted_message
                          << " (partial results written)\n";
                return 3;
            }
        } else if (*sweep) {
            const auto qs = read_jsonl_as<Question>(q_path);
            const auto configs = parse_sweep_grid(read_json(grid_path));
            auto lm = mopt.endpoint();
            const auto result = run_sweep(qs, configs, *lm, sweep_parallel);
            emit(sweep_out, dump_report(json(result)));
        } else if (*age) {
            const auto table = load_norm_table(norms_path);
            std::cout << json(lookup_age_equivalent(table, subtest, raw)).dump() << '\n';
        } else if (*annotate) {
            const auto qs = read_jsonl_as<Question>(q_path);
            const auto responses = read_jsonl_as<LMResponse>(resp_path);
            std::map<std::string, features::PreAnnotation> pre;
            if (!pre_path.empty()) pre = features::load_pre_annotations(pre_path);
            Warnings w;
            Lexicon lexicon;
            if (!lexicon_path.empty()) lexicon = load_aoa_lexicon(fs::path(lexicon_path), w);
            print_warnings(w);
            features::LexiconTagger tagger(lexicon_path.empty() ? nullptr : &lexicon);
            const auto fvs = features::annotate_all(qs, responses, tagger, pre);
            std::map<std::string, int> h;
            if (!outcomes_path.empty())
                for (const auto& o : read_jsonl(fs::path(outcomes_path)))
                    h[o.at("question_id").get<std::string>()] = o.at("h").get<int>();
            std::string text;
            for (const auto& f : fvs) {
                std::optional<int> hv;
                if (auto it = h.find(f.question_id); it != h.end()) hv = it->second;
                text += features::to_json_row(f, hv).dump() + "\n";
            }
            write_atomic(ann_out, text);
        } else if (*age_test) {
            const auto items = load_items(outcomes_path, q_path);
            AgeTestRequest req;
            req.mode = parse_age_mode(mode);
            req.kind = parse_age_test_kind(test);
            req.mu = mu_arg == "auto" ? 0.0 : std::stod(mu_arg);
            if (gamma_arg != "auto") req.gamma = std::stod(gamma_arg);
            req.alpha = alpha;
            req.ages = parse_list(ages_arg);
            emit(at_out, dump_report(age_test_json(items, req)));
        } else if (*analyze) {
            std::vector<features::DesignRecord> records;
            for (const auto& j : read_jsonl(fs::path(design_path))) records.push_back(features::from_json_row(j));
            emit(an_out, dump_report(analysis_json(records)));
        } else if (*simulate) {
            const auto items = load_items(outcomes_path, q_path);
            sopt.rho_grid = parse_list(rho_arg);
            sopt.mu = sim_mu > 0.0 ? sim_mu : default_human_mean();
            sopt.mode = parse_age_mode(mode);
            sopt.ages = ages_arg.empty() ? default_age_grid(items) : parse_list(ages_arg);
            const auto rep = stats::simulation_experiment(items, sopt);
            json cells = json::array();
            for (const auto& c : rep.cells)
                cells.push_back({{"rho", c.rho},
                                 {"age", c.age},
                                 {"n", c.n},
                                 {"gamma", c.gamma},
                                 {"td_p_mean", c.td_p_mean},
                                 {"means_p_mean", c.means_p_mean},
                                 {"td_p", c.td_p},
                                 {"hvh_td_p", c.hvh_td_p}});
            emit(sim_out, dump_report(json{{"mu", sopt.mu}, {"trials", sopt.trials}, {"seed", sopt.seed}, {"cells", cells}}));
        } else if (*energy) {
            auto a = load_embeddings(emb_a);
            auto b = load_embeddings(emb_b);
            if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidArgument, "embedding sets must be non-empty");
            std::vector<std::vector<double>> all = a;
            all.insert(all.end(), b.begin(), b.end());
            const auto labels = stats::coarsen(all, energy_seed);
            const std::vector<int> la(labels.begin(), labels.begin() + static_cast<long>(a.size()));
            const std::vector<int> lb(labels.begin() + static_cast<long>(a.size()), labels.end());
            const auto est = estimator == "v" ? stats::EnergyEstimator::IncludeSelfPairs
                                              : stats::EnergyEstimator::ExcludeSelfPairs;
            std::cout << json{{"k", stats::coarsen_k(all.size())},
                              {"n_a", a.size()},
                              {"n_b", b.size()},
                              {"estimator", estimator},
                              {"energy", stats::energy_distance(la, lb, est)}}
                             .dump()
                      << '\n';
        } else if (*report) {
            ReportOptions ro;
            ro.alpha = alpha;
            const auto rep = render_run_report(run_dir, ro);
            std::cout << "wrote " << (fs::path(run_dir) / "report.json").string() << '\n';
            (void)rep;
        } else if (*serve) {
            ServiceConfig cfg;
            cfg.data_dir = data_dir;
            cfg.lm = mopt.endpoint();
            if (!norms_path.empty()) cfg.norms = load_norm_table(norms_path);
            if (const char* t = std::getenv(token_env.c_str()); t && *t) cfg.token = t;
            ClinicianService service(cfg);
            httplib::Server server;
            service.install(server);
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) g_server->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (g_server) g_server->stop();
            });
            std::cerr << "listening on " << host << ':' << port << '\n';
            if (!server.listen(host, port)) throw Error(ErrorKind::Transport, "cannot listen on port " + std::to_string(port));
        }
    } catch (const Error& e) {
        std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
