#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agealign/error.hpp"
#include "agealign/gateway.hpp"
#include "agealign/stats.hpp"
#include "agealign/types.hpp"

namespace agealign {

// 1 iff the extracted answer matches the key. Free-form questions have no auto-scorer.
int auto_score(const Question& question, const LMResponse& response);

/// Counts consecutive zero scores; k = 0 disables the stop rule.
class CeilingTracker {
public:
    explicit CeilingTracker(int k = 4);

    // Returns true when this outcome triggers the stop.
    bool record(int h);
    bool stopped() const { return stopped_; }
    int consecutive_errors() const { return run_; }
    int k() const { return k_; }

private:
    int k_;
    int run_ = 0;
    bool stopped_ = false;
};

struct SubtestRun {
    std::vector<LMResponse> responses;
    std::vector<Outcome> outcomes;
    long raw_score = 0;
    bool stopped_early = false;
    // Set when the gateway failed; responses/outcomes hold everything scored before it.
    std::optional<ErrorKind> aborted_kind;
    std::string aborted_message;
};

/// Asks and auto-scores questions in order. With ceiling_k > 0 questions go
/// one at a time so the stop rule sees outcomes in order; with ceiling_k = 0
/// they are batched `max_in_flight` at a time.
SubtestRun run_subtest(std::span<const Question> questions, const PromptProtocol& protocol,
                       const SamplingConfig& sampling, int ceiling_k, LanguageModel& lm, int max_in_flight = 4);

/// Sorts WC questions by pair AoA ascending (stable; unknown AoA last).
std::vector<Question> order_for_ceiling(std::span<const Question> questions);

/// Throws InvalidScore outside [0, max_raw], NotFound for an unknown subtest.
AgeEquivalent lookup_age_equivalent(const NormTable& table, const std::string& subtest, long raw_score);

NormTable load_norm_table(const std::filesystem::path& path);

// ---- clinician sessions ----

enum class ItemState { Pending, Responded, Scored };
enum class SessionStatus { Active, CeilingStopped, Completed };

std::string to_string(ItemState s);
std::string to_string(SessionStatus s);

/// Observation tags offered by default; callers may extend the list.
const std::vector<std::string>& default_observation_tags();

struct Observation {
    std::string question_id;
    std::optional<std::string> tag;
    std::string text;

    bool operator==(const Observation&) const = default;
};

struct SessionItem {
    Question question;
    ItemState state = ItemState::Pending;
    std::optional<std::string> prompt;
    std::optional<LMResponse> response;
    std::optional<Outcome> outcome;
};

struct PresentedItem {
    std::string question_id;
    std::size_t index = 0;
    std::string prompt;
    LMResponse response;
    int max_score = 1;
};

struct SessionReport {
    std::string session_id;
    std::string subtest;
    SessionStatus status = SessionStatus::Active;
    std::vector<Outcome> outcomes;
    long raw_score = 0;
    long max_score = 0;
    double percent = 0.0;
    std::optional<AgeEquivalent> age;
    std::vector<Observation> observations;
};

class ExamSession {
public:
    ExamSession() = default;
    ExamSession(std::string id, std::string subtest, std::vector<Question> questions, PromptProtocol protocol,
                SamplingConfig sampling, int ceiling_k = 4);

    const std::string& id() const { return id_; }
    const std::string& subtest() const { return subtest_; }
    SessionStatus status() const { return status_; }
    int ceiling_k() const { return ceiling_k_; }
    int consecutive_errors() const { return consecutive_errors_; }
    const std::vector<SessionItem>& items() const { return items_; }
    const std::vector<Observation>& observations() const { return observations_; }
    // Index of the first unscored item; items().size() when none is left.
    std::size_t cursor() const;

    /// Presents the current item, asking the LM the first time. Asking again
    /// returns the stored response. Empty once the session is terminal.
    std::optional<PresentedItem> next(LanguageModel& lm);

    /// Scores the currently presented item. Sequencing error for any other
    /// question, State error on a terminal session, InvalidScore outside
    /// [0, max_score].
    void record_score(const std::string& question_id, int h, std::optional<std::string> note = std::nullopt,
                      std::optional<std::string> tag = std::nullopt);

    /// Ends an active session as completed; terminal sessions are left as is.
    SessionReport finish(const NormTable* norms = nullptr);
    SessionReport report(const NormTable* norms = nullptr) const;

    long raw_score() const;
    long max_score() const;

    friend void to_json(json& j, const ExamSession& s);
    friend void from_json(const json& j, ExamSession& s);

private:
    std::string id_;
    std::string subtest_;
    PromptProtocol protocol_;
    SamplingConfig sampling_;
    int ceiling_k_ = 4;
    int consecutive_errors_ = 0;
    SessionStatus status_ = SessionStatus::Active;
    std::vector<SessionItem> items_;
    std::vector<Observation> observations_;
};

void to_json(json& j, const SessionReport& r);

// ---- checklists ----

enum class ChecklistMode { PenalizeInapplicable, RestrictToApplicable, Extrapolate };

std::string to_string(ChecklistMode m);
ChecklistMode parse_checklist_mode(std::string_view s);

struct ChecklistItem {
    std::string id;
    std::string description;
    bool applicable = true;
    std::optional<int> rating;  // 1 pass, 0 fail
};

struct ChecklistSession {
    std::string id;
    std::string subtest;
    std::vector<ChecklistItem> items;
    ChecklistMode mode = ChecklistMode::RestrictToApplicable;

    void rate(const std::string& item_id, int rating);
};

struct ChecklistScore {
    long raw = 0;
    long denominator = 0;
    double percent = 0.0;
    std::optional<long> extrapolated_raw;
    std::optional<AgeEquivalent> age;
};

/// restrict: percent over applicable items; penalize: over all items, with
/// inapplicable items counting 0; extrapolate: restrict percent, raw scaled to
/// the full item count before the norm lookup.
ChecklistScore score_checklist(const ChecklistSession& session, const NormTable* norms = nullptr);

void to_json(json& j, const ChecklistSession& s);
void from_json(const json& j, ChecklistSession& s);
void to_json(json& j, const ChecklistScore& s);

// ---- prompt/parameter sweep ----

struct SweepConfig {
    std::string label;
    PromptProtocol protocol;
    SamplingConfig sampling;
};

/// Grid JSON: {"protocols": [name | {"name", "template"}],
///             "sampling": [{...}, ...]} or {"model_id", "top_p": [...], "temperature": [...], "max_tokens"}.
std::vector<SweepConfig> parse_sweep_grid(const json& grid);

struct SweepRow {
    std::string label;
    std::string protocol;
    SamplingConfig sampling;
    long correct = 0;
    long n = 0;
    double score = 0.0;  // fraction correct
    std::optional<std::string> error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double mean_score = 0.0;
    double score_std_dev = 0.0;  // population, over configs without errors
    stats::ChiSquareResult chi2;
    bool chi2_degenerate = false;  // fewer than two non-empty rows or columns
    std::vector<std::string> flagged;
};

SweepResult run_sweep(std::span<const Question> questions, std::span<const SweepConfig> configs, LanguageModel& lm,
                      int parallel_configs = 4);

void to_json(json& j, const SweepResult& r);

}  // namespace agealign
