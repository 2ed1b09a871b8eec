// Synthetic lexicons, question sets, and planted-profile stubs for tests.
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "agealign/builder.hpp"
#include "agealign/gateway.hpp"
#include "agealign/rng.hpp"
#include "agealign/types.hpp"

namespace fixture {

using namespace agealign;

inline std::string word(std::size_t i) {
    // Letters only, so the tokenizer sees each word as a single token.
    std::string s = "w";
    do {
        s += static_cast<char>('a' + i % 26);
        i /= 26;
    } while (i > 0);
    return s;
}

// Words w0..w(n-1) with AoA spread over [2, 18).
inline Lexicon lexicon(std::size_t n, std::uint64_t seed = 1) {
    Rng rng(seed);
    Lexicon lex;
    for (std::size_t i = 0; i < n; ++i) {
        WordEntry e;
        e.lemma = word(i);
        e.aoa_years = 2.0 + 16.0 * rng.uniform();
        e.definition = "meaning number " + std::to_string(i);
        lex[e.lemma] = e;
    }
    return lex;
}

inline std::vector<AssociationRecord> associations(const Lexicon& lex, std::size_t n, std::uint64_t seed = 2) {
    static const std::vector<std::string> relations = {"action", "location", "phrase", "synonym", "function",
                                                       "category", "antonym", "part"};
    std::vector<std::string> words;
    for (const auto& [w, e] : lex) words.push_back(w);
    Rng rng(seed);
    std::vector<AssociationRecord> out;
    while (out.size() < n) {
        const auto& a = words[rng.below(words.size())];
        const auto& b = words[rng.below(words.size())];
        if (a == b) continue;
        out.push_back(AssociationRecord{a, b, relations[rng.below(relations.size())], "the " + a + " goes with the " + b});
    }
    return out;
}

// WC questions with pair AoA drawn uniformly on [2, 18).
inline std::vector<Question> wc_questions(std::size_t n, std::uint64_t seed = 3) {
    Rng rng(seed);
    std::vector<Question> out;
    for (std::size_t i = 0; i < n; ++i) {
        WCQuestion q;
        q.id = "q" + std::to_string(i);
        q.words = {word(4 * i), word(4 * i + 1), word(4 * i + 2), word(4 * i + 3)};
        q.gold = WordPair(q.words[0], q.words[1]);
        q.pair_aoa = 2.0 + 16.0 * rng.uniform();
        q.relation = "synonym";
        q.explanation = "the " + q.words[0] + " and the " + q.words[1];
        out.push_back(q);
    }
    return out;
}

inline std::string answer_text(const WCQuestion& q, bool correct) {
    const auto& a = correct ? q.gold.first() : q.words[2];
    const auto& b = correct ? q.gold.second() : q.words[3];
    return "\"" + a + "\" and \"" + b + "\"";
}

// Correct iff the answer flag says so; the flag per question is fixed up front.
inline std::shared_ptr<FunctionLanguageModel> scripted(const std::vector<Question>& qs, const std::vector<int>& correct) {
    auto by_id = std::make_shared<std::map<std::string, std::pair<WCQuestion, int>>>();
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto& q = std::get<WCQuestion>(qs[i]);
        (*by_id)[q.id] = {q, correct[i]};
    }
    return std::make_shared<FunctionLanguageModel>([by_id](const std::string&, const std::string& id) {
        const auto& [q, ok] = by_id->at(id);
        return answer_text(q, ok != 0);
    });
}

// Correct iff pair AoA <= cutoff, each answer flipped with probability `noise`.
inline std::vector<int> planted_profile(const std::vector<Question>& qs, double cutoff, double noise, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> out;
    for (const auto& q : qs) {
        int ok = *question_aoa(q) <= cutoff ? 1 : 0;
        if (rng.bernoulli(noise)) ok = 1 - ok;
        out.push_back(ok);
    }
    return out;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("agealign-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace fixture
