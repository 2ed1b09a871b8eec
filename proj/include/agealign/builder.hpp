#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "agealign/types.hpp"

namespace agealign {

/// Lemma (lowercased) -> entry. Ordered so every traversal is deterministic.
using Lexicon = std::map<std::string, WordEntry>;

using Warnings = std::vector<std::string>;

/// CSV with header `word,aoa_years` and optional `morph_count,pos,definition`.
/// Duplicate lemmas keep the lowest AoA and add a warning.
Lexicon load_aoa_lexicon(std::istream& in, Warnings& warnings);
Lexicon load_aoa_lexicon(const std::filesystem::path& path, Warnings& warnings);

/// CSV with header `cue,association,relation,explanation`. Rows with cue ==
/// association are dropped; relations outside the known label set become "unknown".
std::vector<AssociationRecord> load_wax(std::istream& in, Warnings& warnings);
std::vector<AssociationRecord> load_wax(const std::filesystem::path& path, Warnings& warnings);

const std::vector<std::string>& known_relations();
std::string normalize_relation(std::string_view label);

const WordEntry* find_word(const Lexicon& lexicon, std::string_view word);

// Max of the two words' AoA; throws Error(UnknownAoa) if either is missing.
double pair_aoa(std::string_view w1, std::string_view w2, const Lexicon& lexicon);

struct BuilderConfig {
    std::uint64_t seed = 0;
    int n_distractors = 2;
    bool overlap_filter = true;
    bool aoa_required = true;
    int max_resample = 100;
};

std::vector<WCQuestion> build_wc_large(std::span<const AssociationRecord> records, const Lexicon& lexicon,
                                       const BuilderConfig& config, Warnings& warnings);

std::vector<DefQuestion> build_def_test(const Lexicon& lexicon, const BuilderConfig& config, Warnings& warnings);

enum class HistogramKey { Word, Pair };

/// Counts by integer-truncated AoA. `Pair` uses each question's pair AoA;
/// `Word` counts each gold word once per question using the lexicon.
std::map<int, std::size_t> aoa_histogram(std::span<const WCQuestion> questions, HistogramKey key,
                                         const Lexicon& lexicon);
std::map<int, std::size_t> aoa_histogram(std::span<const double> aoas);

// Ascending pair AoA, stable; default presentation order for ceiling-ruled runs.
std::vector<Question> order_by_aoa(std::vector<Question> questions);

}  // namespace agealign
