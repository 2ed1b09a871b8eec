#include "agealign/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <thread>

#include <httplib.h>

#include "agealign/error.hpp"
#include "agealign/io.hpp"

namespace agealign {

const char* const kDefTemplate =
    "Among the words \"[W]\", \"[X]\", \"[Y]\", and \"[Z]\", the word that most means \"[Defn.]\" is";

namespace {

constexpr const char* kSlp =
    "Carefully consider the following words and tell me the two words that go together best: "
    "\"[W]\", \"[X]\", \"[Y]\", \"[Z]\".";
constexpr const char* kQa =
    "Instruction: Carefully consider the following words and tell me the two words that go together best: "
    "\"[W]\", \"[X]\", \"[Y]\", \"[Z]\".\n\nStudent:";
constexpr const char* kComp =
    "Among the words \"[W]\", \"[X]\", \"[Y]\", and \"[Z]\", the two words that go together best are";

const std::array<const char*, 4> kSlots = {"[W]", "[X]", "[Y]", "[Z]"};
constexpr std::string_view kDefnSlot = "[Defn.]";

bool is_builtin(std::string_view name) {
    const auto& names = builtin_protocol_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

// Single left-to-right pass so substituted text is never re-expanded.
std::string substitute(std::string_view tmpl, const std::array<std::string, 4>& words,
                       std::optional<std::string_view> definition) {
    std::string out;
    out.reserve(tmpl.size() + 64);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '[') {
            bool matched = false;
            for (std::size_t s = 0; s < kSlots.size(); ++s) {
                std::string_view slot = kSlots[s];
                if (tmpl.substr(i, slot.size()) == slot) {
                    out += words[s];
                    i += slot.size();
                    matched = true;
                    break;
                }
            }
            if (!matched && definition && tmpl.substr(i, kDefnSlot.size()) == kDefnSlot) {
                out += *definition;
                i += kDefnSlot.size();
                matched = true;
            }
            if (matched) continue;
        }
        out += tmpl[i++];
    }
    return out;
}

void require_slots(const PromptProtocol& p, bool need_defn) {
    for (const char* slot : kSlots)
        if (p.template_text.find(slot) == std::string::npos)
            throw Error(ErrorKind::Template, "protocol '" + p.name + "' is missing placeholder " + slot);
    if (need_defn && p.template_text.find(kDefnSlot) == std::string::npos)
        throw Error(ErrorKind::Template, "protocol '" + p.name + "' is missing placeholder [Defn.]");
}

bool is_token_char(unsigned char c) { return std::isalnum(c) || c == '\'' || c >= 0x80; }

}  // namespace

const std::vector<std::string>& builtin_protocol_names() {
    static const std::vector<std::string> names = {"SLP", "QA", "Comp"};
    return names;
}

PromptProtocol builtin_protocol(std::string_view name) {
    if (name == "SLP") return {"SLP", kSlp};
    if (name == "QA") return {"QA", kQa};
    if (name == "Comp") return {"Comp", kComp};
    throw Error(ErrorKind::Template, "unknown protocol '" + std::string(name) + "'");
}

std::string render_prompt(const PromptProtocol& protocol, const Question& question) {
    if (const auto* wc = std::get_if<WCQuestion>(&question)) {
        require_slots(protocol, false);
        return substitute(protocol.template_text, wc->words, std::nullopt);
    }
    if (const auto* def = std::get_if<DefQuestion>(&question)) {
        PromptProtocol p = protocol;
        if (p.template_text.find(kDefnSlot) == std::string::npos) {
            if (!is_builtin(p.name))
                throw Error(ErrorKind::Template, "protocol '" + p.name + "' is missing placeholder [Defn.]");
            p.template_text = kDefTemplate;
        }
        require_slots(p, true);
        return substitute(p.template_text, def->choices, def->definition);
    }
    return std::get<FreeQuestion>(question).prompt;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        // Trim quote-like apostrophes at token edges: 'car' -> car.
        while (!cur.empty() && cur.front() == '\'') cur.erase(cur.begin());
        while (!cur.empty() && cur.back() == '\'') cur.pop_back();
        if (!cur.empty()) tokens.push_back(std::move(cur));
        cur.clear();
    };
    for (unsigned char c : text) {
        if (is_token_char(c)) cur += static_cast<char>(std::tolower(c));
        else flush();
    }
    flush();
    return tokens;
}

namespace {

// Index into `candidates` of the first candidate uttered at each position, in order of utterance.
std::vector<std::size_t> uttered_order(std::string_view raw_text, std::span<const std::string> candidates,
                                       std::size_t want) {
    const auto tokens = tokenize(raw_text);
    std::vector<std::vector<std::string>> cand_tokens;
    cand_tokens.reserve(candidates.size());
    for (const auto& c : candidates) cand_tokens.push_back(tokenize(c));

    std::vector<std::size_t> found;
    for (std::size_t pos = 0; pos < tokens.size() && found.size() < want; ++pos) {
        std::size_t best = candidates.size();
        std::size_t best_len = 0;
        for (std::size_t c = 0; c < cand_tokens.size(); ++c) {
            const auto& ct = cand_tokens[c];
            if (ct.empty() || ct.size() <= best_len || pos + ct.size() > tokens.size()) continue;
            if (std::equal(ct.begin(), ct.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
                best = c;
                best_len = ct.size();
            }
        }
        if (best == candidates.size()) continue;
        // Candidates that tokenize identically count as the same utterance.
        const bool dup = std::any_of(found.begin(), found.end(),
                                     [&](std::size_t f) { return cand_tokens[f] == cand_tokens[best]; });
        if (!dup) found.push_back(best);
        pos += best_len - 1;
    }
    return found;
}

bool contains_run(const std::vector<std::string>& tokens, const std::vector<std::string>& run) {
    if (run.empty() || run.size() > tokens.size()) return false;
    return std::search(tokens.begin(), tokens.end(), run.begin(), run.end()) != tokens.end();
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        cur += c;
        if (c == '.' || c == '!' || c == '?' || c == '\n') {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

std::optional<WordPair> extract_answer_wc(std::string_view raw_text, std::span<const std::string> candidates) {
    const auto found = uttered_order(raw_text, candidates, 2);
    if (found.size() < 2) return std::nullopt;
    return WordPair(candidates[found[0]], candidates[found[1]]);
}

std::optional<std::string> extract_answer_def(std::string_view raw_text, std::span<const std::string> choices) {
    const auto found = uttered_order(raw_text, choices, 1);
    if (found.empty()) return std::nullopt;
    return choices[found[0]];
}

bool detect_explanation(std::string_view raw_text, std::span<const std::string> extracted_answer,
                        const ExplanationRule& rule) {
    const auto sentences = split_sentences(raw_text);
    std::vector<std::vector<std::string>> sentence_tokens;
    for (const auto& s : sentences) sentence_tokens.push_back(tokenize(s));

    for (const auto& marker : rule.causal_markers) {
        const auto m = tokenize(marker);
        for (const auto& st : sentence_tokens)
            if (contains_run(st, m)) return true;
    }

    std::vector<std::vector<std::string>> answer_runs;
    for (const auto& a : extracted_answer) answer_runs.push_back(tokenize(a));

    std::size_t answer_sentence = 0;
    bool located = answer_runs.empty();
    for (std::size_t i = 0; i < sentence_tokens.size() && !located; ++i) {
        for (const auto& run : answer_runs) {
            if (contains_run(sentence_tokens[i], run)) {
                answer_sentence = i;
                located = true;
                break;
            }
        }
    }
    if (!located) answer_sentence = 0;

    int extra = 0;
    for (std::size_t i = 0; i < sentence_tokens.size(); ++i) {
        if (i == answer_sentence) continue;
        for (const auto& t : sentence_tokens[i])
            if (std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalpha(c); })) ++extra;
    }
    return extra >= rule.min_extra_tokens;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void check_embedding_dims(const std::vector<std::vector<double>>& vecs) {
    for (const auto& v : vecs) {
        if (v.empty()) throw Error(ErrorKind::Provider, "provider returned an empty embedding");
        if (v.size() != vecs.front().size())
            throw Error(ErrorKind::Provider, "provider returned embeddings of differing dimension");
    }
}

// ---- HTTP ----

HttpLanguageModel::HttpLanguageModel(HttpEndpointConfig config) : config_(std::move(config)) {
    if (const char* key = std::getenv(config_.credential_env.c_str())) credential_ = key;
}

json HttpLanguageModel::post_with_retry(const std::string& path, const json& body, int& retries) {
    if (credential_.empty())
        throw Error(ErrorKind::Auth, "credential variable " + config_.credential_env + " is not set");
    retries = 0;
    const httplib::Headers headers = {{"Authorization", "Bearer " + credential_}};
    const std::string payload = body.dump();
    ErrorKind last_kind = ErrorKind::Transport;
    std::string last_message;
    const int attempts = std::max(1, config_.retry.max_attempts);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            ++retries;
            std::this_thread::sleep_for(config_.retry.base_delay * (1 << (attempt - 1)));
        }
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_kind = ErrorKind::Transport;
            last_message = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403)
            throw Error(ErrorKind::Auth, "endpoint rejected credential (HTTP " + std::to_string(res->status) + ")");
        if (res->status == 429) {
            last_kind = ErrorKind::RateLimit;
            last_message = "rate limited after " + std::to_string(attempt + 1) + " attempts";
            continue;
        }
        if (res->status >= 500) {
            last_kind = ErrorKind::Transport;
            last_message = "server error HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw Error(ErrorKind::Provider, "HTTP " + std::to_string(res->status) + ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::MalformedResponse, std::string("response is not JSON: ") + e.what());
        }
    }
    throw Error(last_kind, last_message);
}

CompletionResult HttpLanguageModel::complete(const std::string& prompt, const SamplingConfig& sampling,
                                             const std::string&) {
    sampling.validate();
    json body = {{"model", sampling.model_id},
                 {"prompt", prompt},
                 {"top_p", sampling.top_p},
                 {"temperature", sampling.temperature},
                 {"max_tokens", sampling.max_tokens}};
    CompletionResult result;
    const json res = post_with_retry(config_.completion_path, body, result.retries);
    try {
        result.text = res.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::MalformedResponse, "completion response lacks choices[0].text");
    }
    result.config_fingerprint = sampling.fingerprint();
    return result;
}

std::vector<std::vector<double>> HttpLanguageModel::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    int retries = 0;
    const json res = post_with_retry(config_.embedding_path, {{"model", config_.embedding_model}, {"input", texts}},
                                     retries);
    std::vector<std::vector<double>> out;
    try {
        for (const auto& item : res.at("data")) out.push_back(item.at("embedding").get<std::vector<double>>());
    } catch (const json::exception&) {
        throw Error(ErrorKind::MalformedResponse, "embedding response lacks data[].embedding");
    }
    if (out.size() != texts.size())
        throw Error(ErrorKind::Provider, "provider returned " + std::to_string(out.size()) + " embeddings for " +
                                             std::to_string(texts.size()) + " inputs");
    check_embedding_dims(out);
    return out;
}

// ---- stubs ----

StubLanguageModel::StubLanguageModel(const std::filesystem::path& path) {
    for (const auto& j : read_jsonl(path)) {
        if (j.contains("embedding")) {
            set_embedding(j.at("text_key").get<std::string>(), j.at("embedding").get<std::vector<double>>());
        } else if (j.contains("question_id")) {
            set_response(j.at("question_id").get<std::string>(), j.at("text").get<std::string>());
        } else if (j.contains("default")) {
            set_default(j.at("default").get<std::string>());
        } else {
            throw Error(ErrorKind::Parse, path.string() + ": stub line needs question_id, text_key, or default");
        }
    }
}

void StubLanguageModel::set_response(std::string question_id, std::string text) {
    responses_[std::move(question_id)] = std::move(text);
}

void StubLanguageModel::set_embedding(std::string text, std::vector<double> vec) {
    embeddings_[std::move(text)] = std::move(vec);
}

CompletionResult StubLanguageModel::complete(const std::string&, const SamplingConfig& sampling,
                                             const std::string& question_id) {
    CompletionResult r;
    r.config_fingerprint = sampling.fingerprint();
    if (auto it = responses_.find(question_id); it != responses_.end()) r.text = it->second;
    else if (default_text_) r.text = *default_text_;
    else throw Error(ErrorKind::NotFound, "stub has no response for question '" + question_id + "'");
    return r;
}

std::vector<std::vector<double>> StubLanguageModel::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
        auto it = embeddings_.find(t);
        if (it == embeddings_.end()) throw Error(ErrorKind::NotFound, "stub has no embedding for '" + t + "'");
        out.push_back(it->second);
    }
    check_embedding_dims(out);
    return out;
}

CompletionResult FunctionLanguageModel::complete(const std::string& prompt, const SamplingConfig& sampling,
                                                 const std::string& question_id) {
    return {complete_(prompt, question_id), 0, sampling.fingerprint()};
}

std::vector<std::vector<double>> FunctionLanguageModel::embed(const std::vector<std::string>& texts) {
    if (!embed_) throw Error(ErrorKind::Provider, "no embedding function configured");
    if (texts.empty()) return {};
    auto out = embed_(texts);
    if (out.size() != texts.size()) throw Error(ErrorKind::Provider, "embedding count mismatch");
    check_embedding_dims(out);
    return out;
}

// ---- orchestration ----

LMResponse ask(LanguageModel& lm, const PromptProtocol& protocol, const Question& question,
               const SamplingConfig& sampling, const ExplanationRule& rule) {
    LMResponse r;
    r.question_id = question_id(question);
    const std::string prompt = render_prompt(protocol, question);
    r.metadata.started_at = utc_timestamp();
    CompletionResult c = lm.complete(prompt, sampling, r.question_id);
    r.metadata.finished_at = utc_timestamp();
    r.metadata.retries = c.retries;
    r.metadata.config_fingerprint = c.config_fingerprint.empty() ? sampling.fingerprint() : c.config_fingerprint;
    r.raw_text = std::move(c.text);

    if (const auto* wc = std::get_if<WCQuestion>(&question)) {
        if (auto pair = extract_answer_wc(r.raw_text, wc->words)) r.extracted = {pair->first(), pair->second()};
    } else if (const auto* def = std::get_if<DefQuestion>(&question)) {
        if (auto word = extract_answer_def(r.raw_text, def->choices)) r.extracted = {*word};
    }
    r.has_explanation = detect_explanation(r.raw_text, r.extracted, rule);
    return r;
}

std::vector<LMResponse> ask_all(LanguageModel& lm, const PromptProtocol& protocol, std::span<const Question> questions,
                                const SamplingConfig& sampling, int max_in_flight, const ExplanationRule& rule) {
    std::vector<LMResponse> results(questions.size());
    std::vector<std::exception_ptr> errors(questions.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::min<std::size_t>(std::max(1, max_in_flight), questions.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < questions.size(); i = next++) {
                    try {
                        results[i] = ask(lm, protocol, questions[i], sampling, rule);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

}  // namespace agealign
