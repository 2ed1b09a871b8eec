#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace agealign {

using json = nlohmann::json;

// Lowercase ASCII copy; lemmas and candidate words are compared in this form.
std::string to_lower(std::string_view s);

struct WordEntry {
    std::string lemma;
    double aoa_years = 0.0;
    std::optional<int> morph_feature_count;
    std::optional<std::string> pos_hint;
    std::optional<std::string> definition;

    bool operator==(const WordEntry&) const = default;
};

struct AssociationRecord {
    std::string cue;
    std::string association;
    std::string relation;
    std::string explanation;

    bool operator==(const AssociationRecord&) const = default;
};

/// Unordered pair of words, stored with first <= second.
class WordPair {
public:
    WordPair() = default;
    WordPair(std::string a, std::string b);

    const std::string& first() const { return first_; }
    const std::string& second() const { return second_; }
    bool contains(std::string_view w) const { return first_ == w || second_ == w; }

    bool operator==(const WordPair&) const = default;
    auto operator<=>(const WordPair&) const = default;

private:
    std::string first_;
    std::string second_;
};

struct FeatureAnnotations {
    std::optional<std::array<std::string, 2>> pos_signature;
    std::optional<std::string> morph_class;

    bool operator==(const FeatureAnnotations&) const = default;
};

struct WCQuestion {
    std::string id;
    std::array<std::string, 4> words;
    WordPair gold;
    std::optional<double> pair_aoa;
    std::string relation;
    std::string explanation;
    std::optional<FeatureAnnotations> features;

    bool operator==(const WCQuestion&) const = default;
};

struct DefQuestion {
    std::string id;
    std::string target;
    std::string definition;
    std::array<std::string, 4> choices;
    double aoa = 0.0;

    bool operator==(const DefQuestion&) const = default;
};

// Clinician-scored item (FS, RS, USP, ...): free text prompt, graded score.
struct FreeQuestion {
    std::string id;
    std::string prompt;
    int max_score = 1;
    std::optional<double> aoa;

    bool operator==(const FreeQuestion&) const = default;
};

using Question = std::variant<WCQuestion, DefQuestion, FreeQuestion>;

const std::string& question_id(const Question& q);
std::optional<double> question_aoa(const Question& q);
int question_max_score(const Question& q);

// Throws Error(InvalidArgument) when a WCQuestion/DefQuestion invariant fails.
void validate(const WCQuestion& q);
void validate(const DefQuestion& q);

enum class TestKind { WC, Def };

struct PromptProtocol {
    std::string name;  // SLP, QA, Comp, or a custom label
    std::string template_text;

    bool operator==(const PromptProtocol&) const = default;
};

struct SamplingConfig {
    std::string model_id = "text-davinci-002";
    double top_p = 0.95;
    double temperature = 1.0;
    int max_tokens = 256;

    static SamplingConfig factual(std::string model_id);

    void validate() const;
    // Stable hex digest of the canonical JSON form.
    std::string fingerprint() const;

    bool operator==(const SamplingConfig&) const = default;
};

struct RequestMetadata {
    std::string started_at;
    std::string finished_at;
    std::string config_fingerprint;
    int retries = 0;

    bool operator==(const RequestMetadata&) const = default;
};

struct LMResponse {
    std::string question_id;
    std::string raw_text;
    std::vector<std::string> extracted;  // 2 words for WC, 1 for Def, empty when none
    bool has_explanation = false;
    RequestMetadata metadata;

    bool operator==(const LMResponse&) const = default;
};

enum class Scorer { Auto, Clinician };

struct Outcome {
    std::string question_id;
    int h = 0;
    Scorer scorer = Scorer::Auto;
    std::optional<std::string> note;

    bool operator==(const Outcome&) const = default;
};

// Percent of the highest possible score.
double normalize_score(long raw, long max);

// Ages are real years; "year:month" is display only (months truncated).
std::string format_age(double years);
double parse_age(std::string_view text);

struct AgeEquivalent {
    enum class Kind { Exact, BelowFloor, AboveCeiling };
    Kind kind = Kind::Exact;
    double years = 0.0;
    std::string label;  // as printed in the norm table, e.g. "7:5", "< 3", "21:5+"

    bool operator==(const AgeEquivalent&) const = default;
};

struct NormBand {
    int min_raw = 0;
    int max_raw = 0;
    AgeEquivalent age;

    bool operator==(const NormBand&) const = default;
};

struct SubtestNorms {
    int max_raw = 0;
    std::vector<NormBand> bands;

    bool operator==(const SubtestNorms&) const = default;
};

struct NormTable {
    std::map<std::string, SubtestNorms> subtests;

    // Checks bands are ordered, non-overlapping, cover [0, max], ages non-decreasing.
    void validate() const;

    bool operator==(const NormTable&) const = default;
};

AgeEquivalent parse_age_label(std::string_view label);

enum class AgeMode { Exact, AtMost };
enum class AgeTestKind { Means, TD };

struct AgeTestResult {
    double age_years = 0.0;
    AgeMode mode = AgeMode::Exact;
    AgeTestKind test_kind = AgeTestKind::Means;
    double statistic = 0.0;
    double p_value = 1.0;
    double alpha = 0.05;
    bool reject = false;
    long n = 0;

    bool operator==(const AgeTestResult&) const = default;
};

std::string to_string(AgeMode m);
std::string to_string(AgeTestKind k);
std::string to_string(Scorer s);
AgeMode parse_age_mode(std::string_view s);
AgeTestKind parse_age_test_kind(std::string_view s);

// JSON conversions (found by ADL from nlohmann::json).
void to_json(json& j, const WordEntry& v);
void from_json(const json& j, WordEntry& v);
void to_json(json& j, const AssociationRecord& v);
void from_json(const json& j, AssociationRecord& v);
void to_json(json& j, const WordPair& v);
void from_json(const json& j, WordPair& v);
void to_json(json& j, const WCQuestion& v);
void from_json(const json& j, WCQuestion& v);
void to_json(json& j, const DefQuestion& v);
void from_json(const json& j, DefQuestion& v);
void to_json(json& j, const FreeQuestion& v);
void from_json(const json& j, FreeQuestion& v);
void to_json(json& j, const Question& v);
void from_json(const json& j, Question& v);
void to_json(json& j, const PromptProtocol& v);
void from_json(const json& j, PromptProtocol& v);
void to_json(json& j, const SamplingConfig& v);
void from_json(const json& j, SamplingConfig& v);
void to_json(json& j, const LMResponse& v);
void from_json(const json& j, LMResponse& v);
void to_json(json& j, const Outcome& v);
void from_json(const json& j, Outcome& v);
void to_json(json& j, const AgeEquivalent& v);
void to_json(json& j, const NormTable& v);
void from_json(const json& j, NormTable& v);
void to_json(json& j, const AgeTestResult& v);
void from_json(const json& j, AgeTestResult& v);

}  // namespace agealign
