#include "agealign/features.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "agealign/error.hpp"
#include "agealign/gateway.hpp"
#include "agealign/io.hpp"

namespace agealign::features {

namespace {

const std::unordered_map<std::string, std::string>& closed_class() {
    static const std::unordered_map<std::string, std::string> words = [] {
        std::unordered_map<std::string, std::string> m;
        for (const char* w : {"a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any",
                              "no", "all", "both", "another"})
            m[w] = "DET";
        for (const char* w : {"on", "in", "at", "of", "for", "with", "to", "from", "by", "about", "under", "over",
                              "into", "onto", "through", "between", "near", "like", "without", "inside", "after",
                              "before", "during", "around", "across", "behind", "against"})
            m[w] = "ADP";
        for (const char* w : {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my",
                              "your", "his", "its", "our", "their", "something", "someone", "one"})
            m[w] = "PRON";
        for (const char* w : {"and", "or", "but", "nor"}) m[w] = "CCONJ";
        for (const char* w : {"because", "since", "if", "when", "while", "although", "as", "so", "than", "whether"})
            m[w] = "SCONJ";
        for (const char* w : {"is", "are", "was", "were", "be", "been", "being", "am", "can", "could", "will",
                              "would", "should", "may", "might", "must", "do", "does", "did", "has", "have", "had"})
            m[w] = "AUX";
        for (const char* w : {"very", "not", "often", "always", "never", "also", "too", "just", "then", "there",
                              "here", "usually", "sometimes", "together"})
            m[w] = "ADV";
        return m;
    }();
    return words;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() > suffix.size() + 1 && s.substr(s.size() - suffix.size()) == suffix;
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

std::string LexiconTagger::tag(const std::vector<std::string>& tokens, std::size_t index) const {
    const std::string& w = tokens.at(index);
    if (auto it = closed_class().find(w); it != closed_class().end()) return it->second;
    if (all_digits(w)) return "NUM";
    if (lexicon_) {
        if (const auto* e = find_word(*lexicon_, w); e && e->pos_hint) {
            std::string up = *e->pos_hint;
            std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
            return up;
        }
    }
    if (index > 0) {
        const std::string& prev = tokens[index - 1];
        if (prev == "to") return "VERB";
        if (auto it = closed_class().find(prev); it != closed_class().end() && it->second == "AUX" &&
                                                 (ends_with(w, "ing") || ends_with(w, "ed")))
            return "VERB";
    }
    if (ends_with(w, "ly")) return "ADV";
    for (const char* suf : {"ous", "ful", "ive", "able", "ible", "less", "ish", "ic", "al"})
        if (ends_with(w, suf)) return "ADJ";
    if (ends_with(w, "ing") || ends_with(w, "ed")) return "VERB";
    return "NOUN";
}

PosPair annotate_pos(const WordPair& pair, std::string_view explanation, const PosTagger& tagger) {
    const auto tokens = tokenize(explanation);
    PosPair out{"X", "X"};
    const std::array<const std::string*, 2> words = {&pair.first(), &pair.second()};
    for (std::size_t k = 0; k < 2; ++k) {
        const auto run = tokenize(*words[k]);
        if (run.empty() || run.size() > tokens.size()) continue;
        auto it = std::search(tokens.begin(), tokens.end(), run.begin(), run.end());
        if (it == tokens.end()) continue;
        // Multiword expressions take the tag of their last token (the head in English compounds).
        const auto index = static_cast<std::size_t>(it - tokens.begin()) + run.size() - 1;
        out[k] = tagger.tag(tokens, index);
    }
    return out;
}

std::string to_string(MorphClass m) {
    switch (m) {
        case MorphClass::Low: return "low";
        case MorphClass::Medium: return "medium";
        case MorphClass::High: return "high";
    }
    return "low";
}

MorphClass parse_morph_class(std::string_view s) {
    if (s == "low") return MorphClass::Low;
    if (s == "medium") return MorphClass::Medium;
    if (s == "high") return MorphClass::High;
    throw Error(ErrorKind::Parse, "unknown morphological class '" + std::string(s) + "'");
}

MorphClass morph_class(int unique_feature_count) {
    if (unique_feature_count < 0) throw Error(ErrorKind::InvalidArgument, "feature count must be non-negative");
    if (unique_feature_count <= 2) return MorphClass::Low;
    if (unique_feature_count <= 4) return MorphClass::Medium;
    return MorphClass::High;
}

bool relation_hard(std::string_view relation) {
    static const std::set<std::string, std::less<>> easy = {"action", "location", "phrase", "synonym"};
    return !easy.count(to_lower(relation));
}

std::map<std::string, PreAnnotation> load_pre_annotations(const std::filesystem::path& path) {
    std::map<std::string, PreAnnotation> out;
    for (const auto& j : read_jsonl(path)) {
        PreAnnotation a;
        if (auto it = j.find("pos_pair"); it != j.end() && !it->is_null()) a.pos_pair = it->get<PosPair>();
        if (auto it = j.find("morph_count"); it != j.end() && !it->is_null()) a.morph_count = it->get<int>();
        out[j.at("question_id").get<std::string>()] = a;
    }
    return out;
}

FeatureVector annotate(const WCQuestion& question, const LMResponse& response, const PosTagger& tagger,
                       const PreAnnotation* pre) {
    if (!question.pair_aoa) throw Error(ErrorKind::UnknownAoa, question.id + ": pair AoA is unknown");
    FeatureVector f;
    f.question_id = question.id;
    if (pre && pre->pos_pair) f.pos_pair = *pre->pos_pair;
    else if (question.features && question.features->pos_signature) f.pos_pair = *question.features->pos_signature;
    else f.pos_pair = annotate_pos(question.gold, question.explanation, tagger);
    f.same_pos = f.pos_pair[0] == f.pos_pair[1];
    f.has_adv_or_adj = std::any_of(f.pos_pair.begin(), f.pos_pair.end(),
                                   [](const std::string& t) { return t == "ADJ" || t == "ADV"; });
    f.relation = question.relation;
    f.relation_hard = relation_hard(question.relation);
    if (pre && pre->morph_count) f.morph = morph_class(*pre->morph_count);
    else if (question.features && question.features->morph_class)
        f.morph = parse_morph_class(*question.features->morph_class);
    f.has_explanation = response.has_explanation;
    f.pair_aoa = *question.pair_aoa;
    return f;
}

DesignRow design_row(const FeatureVector& f, int h) {
    if (!f.morph) throw Error(ErrorKind::InvalidArgument, f.question_id + ": morphological class unknown");
    DesignRow row;
    row.question_id = f.question_id;
    row.error = h == 0 ? 1 : 0;
    row.x = {1.0,
             f.has_adv_or_adj ? 1.0 : 0.0,
             f.same_pos ? 0.0 : 1.0,
             f.relation_hard ? 1.0 : 0.0,
             *f.morph == MorphClass::Low ? 0.0 : 1.0,
             f.has_explanation ? 1.0 : 0.0,
             f.pair_aoa};
    return row;
}

DesignMatrix build_design_matrix(std::span<const Outcome> outcomes, std::span<const FeatureVector> features) {
    std::unordered_map<std::string, const FeatureVector*> by_id;
    for (const auto& f : features) by_id[f.question_id] = &f;

    DesignMatrix dm;
    std::vector<DesignRow> rows;
    std::set<std::string> seen;
    for (const auto& o : outcomes) {
        if (!seen.insert(o.question_id).second)
            throw Error(ErrorKind::Join, "duplicate outcome for question '" + o.question_id + "'");
        auto it = by_id.find(o.question_id);
        if (it == by_id.end()) throw Error(ErrorKind::Join, "no features for question '" + o.question_id + "'");
        if (!it->second->morph) {
            dm.excluded.push_back(o.question_id);
            continue;
        }
        if (o.h != 0 && o.h != 1)
            throw Error(ErrorKind::InvalidArgument, o.question_id + ": design rows need binary outcomes");
        rows.push_back(design_row(*it->second, o.h));
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    dm.X.resize(n, 7);
    dm.Y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dm.ids.push_back(rows[i].question_id);
        for (Eigen::Index j = 0; j < 7; ++j) dm.X(i, j) = rows[i].x[j];
        dm.Y(i) = rows[i].error;
    }
    return dm;
}

std::vector<FeatureVector> annotate_all(std::span<const Question> questions, std::span<const LMResponse> responses,
                                        const PosTagger& tagger, const std::map<std::string, PreAnnotation>& pre) {
    std::unordered_map<std::string, const LMResponse*> by_id;
    for (const auto& r : responses) by_id[r.question_id] = &r;
    std::set<std::string> known;
    std::vector<FeatureVector> out;
    for (const auto& q : questions) {
        known.insert(question_id(q));
        const auto* wc = std::get_if<WCQuestion>(&q);
        if (!wc) continue;
        auto it = by_id.find(wc->id);
        if (it == by_id.end()) continue;
        auto p = pre.find(wc->id);
        out.push_back(annotate(*wc, *it->second, tagger, p == pre.end() ? nullptr : &p->second));
    }
    for (const auto& r : responses)
        if (!known.count(r.question_id))
            throw Error(ErrorKind::Join, "response for unknown question '" + r.question_id + "'");
    return out;
}

json to_json_row(const FeatureVector& f, std::optional<int> h) {
    json j = {{"question_id", f.question_id},
              {"pos_pair", f.pos_pair},
              {"same_pos", f.same_pos},
              {"has_adv_or_adj", f.has_adv_or_adj},
              {"relation", f.relation},
              {"relation_hard", f.relation_hard},
              {"morph_class", f.morph ? json(to_string(*f.morph)) : json(nullptr)},
              {"has_explanation", f.has_explanation},
              {"pair_aoa", f.pair_aoa}};
    if (h) {
        j["error"] = *h == 0 ? 1 : 0;
        if (f.morph) j["x"] = design_row(f, *h).x;
    }
    return j;
}

DesignRecord from_json_row(const json& j) {
    DesignRecord r;
    auto& f = r.features;
    f.question_id = j.at("question_id").get<std::string>();
    f.pos_pair = j.at("pos_pair").get<PosPair>();
    f.same_pos = j.value("same_pos", f.pos_pair[0] == f.pos_pair[1]);
    f.has_adv_or_adj = j.at("has_adv_or_adj").get<bool>();
    f.relation = j.value("relation", std::string("unknown"));
    f.relation_hard = j.value("relation_hard", relation_hard(f.relation));
    if (auto it = j.find("morph_class"); it != j.end() && !it->is_null())
        f.morph = parse_morph_class(it->get<std::string>());
    f.has_explanation = j.at("has_explanation").get<bool>();
    f.pair_aoa = j.at("pair_aoa").get<double>();
    if (auto it = j.find("error"); it != j.end() && !it->is_null()) r.error = it->get<int>();
    return r;
}

}  // namespace agealign::features
