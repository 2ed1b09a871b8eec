#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agealign/builder.hpp"
#include "agealign/types.hpp"

namespace agealign::features {

// Universal POS tags; "X" marks unknown.
using PosPair = std::array<std::string, 2>;

class PosTagger {
public:
    virtual ~PosTagger() = default;
    // Tag of tokens[index] in the context of the whole token sequence.
    virtual std::string tag(const std::vector<std::string>& tokens, std::size_t index) const = 0;
};

/// Convenience fallback: lexicon POS hints, a closed-class word list, then
/// suffix rules, defaulting to NOUN. Pre-annotation files are the reference path.
class LexiconTagger final : public PosTagger {
public:
    LexiconTagger() = default;
    explicit LexiconTagger(const Lexicon* lexicon) : lexicon_(lexicon) {}
    std::string tag(const std::vector<std::string>& tokens, std::size_t index) const override;

private:
    const Lexicon* lexicon_ = nullptr;
};

/// POS of each gold word as used in the explanation; "X" when the word is absent.
PosPair annotate_pos(const WordPair& pair, std::string_view explanation, const PosTagger& tagger);

enum class MorphClass { Low, Medium, High };

std::string to_string(MorphClass m);
MorphClass parse_morph_class(std::string_view s);

/// low <= 2, medium 3-4, high >= 5 unique features across the pair.
MorphClass morph_class(int unique_feature_count);

/// Easy relations are action, location, phrase, synonym; everything else,
/// including unknown, is hard.
bool relation_hard(std::string_view relation);

struct PreAnnotation {
    std::optional<PosPair> pos_pair;
    std::optional<int> morph_count;
};

/// JSONL keyed by question_id with optional `pos_pair` and `morph_count`.
std::map<std::string, PreAnnotation> load_pre_annotations(const std::filesystem::path& path);

struct FeatureVector {
    std::string question_id;
    PosPair pos_pair{"X", "X"};
    bool same_pos = false;
    bool has_adv_or_adj = false;
    std::string relation = "unknown";
    bool relation_hard = true;
    std::optional<MorphClass> morph;
    bool has_explanation = false;
    double pair_aoa = 0.0;
};

FeatureVector annotate(const WCQuestion& question, const LMResponse& response, const PosTagger& tagger,
                       const PreAnnotation* pre = nullptr);

inline constexpr std::array<const char*, 7> kRegressorNames = {
    "intercept", "h1_adv_adj", "h2_distinct_pos", "h3_hard_relation", "h4_morph_med_high", "h5_explains",
    "h6_pair_aoa"};

struct DesignRow {
    std::string question_id;
    int error = 0;  // 1 = LM wrong
    std::array<double, 7> x{};
};

DesignRow design_row(const FeatureVector& f, int h);

struct DesignMatrix {
    std::vector<std::string> ids;
    Eigen::MatrixXd X;  // n x 7
    Eigen::VectorXd Y;
    std::vector<std::string> excluded;  // rows dropped for unknown morphological class
};

/// One row per scored outcome, in outcome order; Y = 1 - h. Throws Error(Join)
/// when an outcome has no matching feature vector.
DesignMatrix build_design_matrix(std::span<const Outcome> outcomes, std::span<const FeatureVector> features);

/// Joins questions, responses, and outcomes by id and annotates each WC question.
std::vector<FeatureVector> annotate_all(std::span<const Question> questions, std::span<const LMResponse> responses,
                                        const PosTagger& tagger, const std::map<std::string, PreAnnotation>& pre);

json to_json_row(const FeatureVector& f, std::optional<int> h);

struct DesignRecord {
    FeatureVector features;
    std::optional<int> error;
};

DesignRecord from_json_row(const json& j);

}  // namespace agealign::features
