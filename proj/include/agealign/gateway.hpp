#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agealign/types.hpp"

namespace agealign {

// ---- prompts ----

/// Built-in protocols: "SLP", "QA", "Comp". WC templates use [W] [X] [Y] [Z];
/// Def questions always use the completion-style definition form with [Defn.].
PromptProtocol builtin_protocol(std::string_view name);
const std::vector<std::string>& builtin_protocol_names();
extern const char* const kDefTemplate;

std::string render_prompt(const PromptProtocol& protocol, const Question& question);

// ---- extraction ----

/// Lowercased alphanumeric tokens (apostrophes kept inside words).
std::vector<std::string> tokenize(std::string_view text);

/// First two distinct candidates uttered, scanning left to right with
/// whole-word matching. Returns candidates in their original spelling.
std::optional<WordPair> extract_answer_wc(std::string_view raw_text, std::span<const std::string> candidates);

std::optional<std::string> extract_answer_def(std::string_view raw_text, std::span<const std::string> choices);

struct ExplanationRule {
    std::vector<std::string> causal_markers = {"because", "since", "as they", "this is"};
    int min_extra_tokens = 3;
};

/// True when text beyond the answer sentence carries >= min_extra_tokens
/// alphabetic tokens, or any sentence carries a causal marker.
bool detect_explanation(std::string_view raw_text, std::span<const std::string> extracted_answer,
                        const ExplanationRule& rule = {});

// ---- endpoints ----

struct CompletionResult {
    std::string text;
    int retries = 0;
    std::string config_fingerprint;
};

class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    // question_id lets offline stubs key canned responses.
    virtual CompletionResult complete(const std::string& prompt, const SamplingConfig& sampling,
                                      const std::string& question_id) = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
};

struct HttpEndpointConfig {
    std::string base_url = "https://api.openai.com";
    std::string completion_path = "/v1/completions";
    std::string embedding_path = "/v1/embeddings";
    std::string embedding_model = "text-embedding-ada-002";
    std::string credential_env = "AGEALIGN_API_KEY";
    RetryPolicy retry;
    std::chrono::seconds timeout{60};
};

/// Completion/embedding client for OpenAI-style JSON endpoints.
/// 401/403 -> Error(Auth) without retry; 429 and 5xx/transport failures are
/// retried with exponential backoff, then surface as RateLimit / Transport.
class HttpLanguageModel final : public LanguageModel {
public:
    explicit HttpLanguageModel(HttpEndpointConfig config);

    CompletionResult complete(const std::string& prompt, const SamplingConfig& sampling,
                              const std::string& question_id) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    json post_with_retry(const std::string& path, const json& body, int& retries);

    HttpEndpointConfig config_;
    std::string credential_;
};

/// Offline endpoint with canned responses keyed by question id.
/// File: JSONL of {"question_id": ..., "text": ...}, optionally
/// {"text_key": ..., "embedding": [...]} lines for embeddings.
class StubLanguageModel final : public LanguageModel {
public:
    StubLanguageModel() = default;
    explicit StubLanguageModel(const std::filesystem::path& path);

    void set_response(std::string question_id, std::string text);
    void set_default(std::string text) { default_text_ = std::move(text); }
    void set_embedding(std::string text, std::vector<double> vec);

    CompletionResult complete(const std::string& prompt, const SamplingConfig& sampling,
                              const std::string& question_id) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    std::map<std::string, std::string> responses_;
    std::map<std::string, std::vector<double>> embeddings_;
    std::optional<std::string> default_text_;
};

/// Adapts plain callables; used by tests and the Python bindings.
class FunctionLanguageModel final : public LanguageModel {
public:
    using CompleteFn = std::function<std::string(const std::string& prompt, const std::string& question_id)>;
    using EmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

    explicit FunctionLanguageModel(CompleteFn complete, EmbedFn embed = {})
        : complete_(std::move(complete)), embed_(std::move(embed)) {}

    CompletionResult complete(const std::string& prompt, const SamplingConfig& sampling,
                              const std::string& question_id) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    CompleteFn complete_;
    EmbedFn embed_;
};

// Checks all vectors share one dimension; throws Error(Provider) otherwise.
void check_embedding_dims(const std::vector<std::vector<double>>& vecs);

std::string utc_timestamp();

/// Render, complete, extract, and detect explanation for one question.
LMResponse ask(LanguageModel& lm, const PromptProtocol& protocol, const Question& question,
               const SamplingConfig& sampling, const ExplanationRule& rule = {});

/// Asks every question with at most `max_in_flight` concurrent requests.
/// Results come back in input order regardless of completion order.
std::vector<LMResponse> ask_all(LanguageModel& lm, const PromptProtocol& protocol, std::span<const Question> questions,
                                const SamplingConfig& sampling, int max_in_flight = 4,
                                const ExplanationRule& rule = {});

}  // namespace agealign
