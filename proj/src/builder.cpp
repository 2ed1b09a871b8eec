#include "agealign/builder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "agealign/error.hpp"
#include "agealign/io.hpp"
#include "agealign/rng.hpp"

namespace agealign {

namespace {

double parse_double(const std::string& s, std::size_t line, const char* what) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || first == last)
        throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
    return v;
}

const std::string& field_at(const CsvRow& row, int col) {
    static const std::string empty;
    if (col < 0 || static_cast<std::size_t>(col) >= row.fields.size()) return empty;
    return row.fields[static_cast<std::size_t>(col)];
}

std::string clean_word(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    if (b == std::string_view::npos) return {};
    return to_lower(s.substr(b, e - b + 1));
}

}  // namespace

Lexicon load_aoa_lexicon(std::istream& in, Warnings& warnings) {
    const CsvTable table = read_csv(in);
    const int c_word = table.column("word");
    const int c_aoa = table.column("aoa_years");
    if (c_word < 0 || c_aoa < 0) throw Error(ErrorKind::Parse, "line 1: header must contain word,aoa_years");
    const int c_morph = table.column("morph_count");
    const int c_pos = table.column("pos");
    const int c_def = table.column("definition");

    Lexicon lexicon;
    for (const auto& row : table.rows) {
        if (row.fields.size() != table.header.size())
            throw Error(ErrorKind::Parse, "line " + std::to_string(row.line) + ": expected " +
                                              std::to_string(table.header.size()) + " fields, got " +
                                              std::to_string(row.fields.size()));
        WordEntry e;
        e.lemma = clean_word(field_at(row, c_word));
        if (e.lemma.empty()) throw Error(ErrorKind::Parse, "line " + std::to_string(row.line) + ": empty word");
        e.aoa_years = parse_double(field_at(row, c_aoa), row.line, "aoa_years");
        if (!(e.aoa_years > 0.0))
            throw Error(ErrorKind::Parse, "line " + std::to_string(row.line) + ": aoa_years must be positive");
        if (const auto& m = field_at(row, c_morph); !m.empty()) {
            const double v = parse_double(m, row.line, "morph_count");
            if (v < 0 || v != std::floor(v))
                throw Error(ErrorKind::Parse, "line " + std::to_string(row.line) + ": morph_count must be a count");
            e.morph_feature_count = static_cast<int>(v);
        }
        if (const auto& p = field_at(row, c_pos); !p.empty()) e.pos_hint = p;
        if (const auto& d = field_at(row, c_def); !d.empty()) e.definition = d;

        auto [it, inserted] = lexicon.try_emplace(e.lemma, e);
        if (!inserted) {
            warnings.push_back("line " + std::to_string(row.line) + ": duplicate lemma '" + e.lemma +
                               "', keeping lowest AoA");
            if (e.aoa_years < it->second.aoa_years) it->second = std::move(e);
        }
    }
    return lexicon;
}

Lexicon load_aoa_lexicon(const std::filesystem::path& path, Warnings& warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
    return load_aoa_lexicon(in, warnings);
}

const std::vector<std::string>& known_relations() {
    static const std::vector<std::string> labels = {
        "action",   "antonym",  "attribute", "category", "cause",    "effect",  "emotion",  "function",
        "location", "material", "part",      "phrase",   "property", "synonym", "thematic", "time",
        "unknown"};
    return labels;
}

std::string normalize_relation(std::string_view label) {
    std::string l = clean_word(label);
    const auto& known = known_relations();
    if (std::find(known.begin(), known.end(), l) != known.end()) return l;
    return "unknown";
}

std::vector<AssociationRecord> load_wax(std::istream& in, Warnings& warnings) {
    const CsvTable table = read_csv(in);
    const int c_cue = table.column("cue");
    const int c_assoc = table.column("association");
    if (c_cue < 0 || c_assoc < 0) throw Error(ErrorKind::Parse, "line 1: header must contain cue,association");
    const int c_rel = table.column("relation");
    const int c_expl = table.column("explanation");

    std::vector<AssociationRecord> out;
    for (const auto& row : table.rows) {
        if (row.fields.size() != table.header.size())
            throw Error(ErrorKind::Parse, "line " + std::to_string(row.line) + ": expected " +
                                              std::to_string(table.header.size()) + " fields");
        AssociationRecord r;
        r.cue = clean_word(field_at(row, c_cue));
        r.association = clean_word(field_at(row, c_assoc));
        if (r.cue.empty() || r.association.empty())
            throw Error(ErrorKind::Parse, "line " + std::to_string(row.line) + ": empty cue or association");
        if (r.cue == r.association) {
            warnings.push_back("line " + std::to_string(row.line) + ": cue equals association, dropped");
            continue;
        }
        const std::string& raw_rel = field_at(row, c_rel);
        r.relation = normalize_relation(raw_rel);
        if (r.relation == "unknown" && !raw_rel.empty() && clean_word(raw_rel) != "unknown")
            warnings.push_back("line " + std::to_string(row.line) + ": unrecognized relation '" + raw_rel +
                               "' mapped to unknown");
        r.explanation = field_at(row, c_expl);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<AssociationRecord> load_wax(const std::filesystem::path& path, Warnings& warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
    return load_wax(in, warnings);
}

const WordEntry* find_word(const Lexicon& lexicon, std::string_view word) {
    auto it = lexicon.find(to_lower(word));
    return it == lexicon.end() ? nullptr : &it->second;
}

double pair_aoa(std::string_view w1, std::string_view w2, const Lexicon& lexicon) {
    const WordEntry* a = find_word(lexicon, w1);
    const WordEntry* b = find_word(lexicon, w2);
    if (!a) throw Error(ErrorKind::UnknownAoa, "no AoA for '" + std::string(w1) + "'");
    if (!b) throw Error(ErrorKind::UnknownAoa, "no AoA for '" + std::string(w2) + "'");
    return std::max(a->aoa_years, b->aoa_years);
}

std::vector<WCQuestion> build_wc_large(std::span<const AssociationRecord> records, const Lexicon& lexicon,
                                       const BuilderConfig& config, Warnings& warnings) {
    if (config.n_distractors < 1) throw Error(ErrorKind::InvalidArgument, "n_distractors must be >= 1");
    if (config.n_distractors != 2)
        throw Error(ErrorKind::InvalidArgument, "WC questions present exactly 4 words (2 distractors)");

    // Distractor pool: every distinct association word, in first-seen order.
    std::vector<std::string> pool;
    std::set<std::string> seen;
    std::set<WordPair> gold_pairs;
    for (const auto& r : records) {
        if (seen.insert(r.association).second) pool.push_back(r.association);
        gold_pairs.emplace(r.cue, r.association);
    }
    if (pool.size() < static_cast<std::size_t>(config.n_distractors) + 2)
        throw Error(ErrorKind::Build, "distractor pool has " + std::to_string(pool.size()) + " words; need at least " +
                                          std::to_string(config.n_distractors + 2));

    auto is_gold = [&](const std::string& a, const std::string& b) { return gold_pairs.count(WordPair(a, b)) > 0; };

    std::vector<WCQuestion> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::optional<double> aoa;
        try {
            aoa = pair_aoa(r.cue, r.association, lexicon);
        } catch (const Error&) {
            if (config.aoa_required) {
                warnings.push_back("record " + std::to_string(i) + " (" + r.cue + ", " + r.association +
                                   "): unknown AoA, skipped");
                continue;
            }
        }

        // Per-record stream so output is independent of scheduling.
        Rng rng(derive_seed(config.seed, i));
        std::vector<std::string> chosen;
        bool exhausted = false;
        for (int d = 0; d < config.n_distractors && !exhausted; ++d) {
            bool accepted = false;
            for (int attempt = 0; attempt < config.max_resample; ++attempt) {
                const std::string& w = pool[rng.below(pool.size())];
                if (w == r.cue || w == r.association) continue;
                if (std::find(chosen.begin(), chosen.end(), w) != chosen.end()) continue;
                if (config.overlap_filter && (is_gold(w, r.cue) || is_gold(w, r.association))) continue;
                chosen.push_back(w);
                accepted = true;
                break;
            }
            exhausted = !accepted;
        }
        if (exhausted) {
            warnings.push_back("record " + std::to_string(i) + " (" + r.cue + ", " + r.association +
                               "): distractor pool exhausted, skipped");
            continue;
        }
        if (config.overlap_filter && is_gold(chosen[0], chosen[1]))
            warnings.push_back("record " + std::to_string(i) + ": distractors '" + chosen[0] + "' and '" + chosen[1] +
                               "' form a gold pair");

        WCQuestion q;
        q.id = "wc-" + std::to_string(i);
        q.words = {r.cue, r.association, chosen[0], chosen[1]};
        rng.shuffle(q.words);
        q.gold = WordPair(r.cue, r.association);
        q.pair_aoa = aoa;
        q.relation = r.relation;
        q.explanation = r.explanation;
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<DefQuestion> build_def_test(const Lexicon& lexicon, const BuilderConfig& config, Warnings& warnings) {
    std::vector<const WordEntry*> defined;
    std::vector<const WordEntry*> all;
    for (const auto& [lemma, entry] : lexicon) {
        all.push_back(&entry);
        if (entry.definition && !entry.definition->empty()) defined.push_back(&entry);
    }
    if (defined.size() < 4)
        throw Error(ErrorKind::Build, "need at least 4 defined words, have " + std::to_string(defined.size()));
    if (config.n_distractors < 1) throw Error(ErrorKind::InvalidArgument, "n_distractors must be >= 1");

    std::vector<DefQuestion> out;
    out.reserve(defined.size());
    for (std::size_t i = 0; i < defined.size(); ++i) {
        const WordEntry& target = *defined[i];
        Rng rng(derive_seed(config.seed, i));
        std::vector<std::string> choices{target.lemma};
        int attempts = 0;
        while (choices.size() < 4 && attempts < config.max_resample * 4) {
            ++attempts;
            const std::string& w = all[rng.below(all.size())]->lemma;
            if (std::find(choices.begin(), choices.end(), w) == choices.end()) choices.push_back(w);
        }
        if (choices.size() < 4) {
            warnings.push_back("word '" + target.lemma + "': could not draw 3 distinct distractors, skipped");
            continue;
        }
        rng.shuffle(choices);
        DefQuestion q;
        q.id = "def-" + std::to_string(i);
        q.target = target.lemma;
        q.definition = *target.definition;
        std::copy(choices.begin(), choices.end(), q.choices.begin());
        q.aoa = target.aoa_years;
        out.push_back(std::move(q));
    }
    return out;
}

std::map<int, std::size_t> aoa_histogram(std::span<const double> aoas) {
    std::map<int, std::size_t> h;
    for (double a : aoas) ++h[static_cast<int>(std::trunc(a))];
    return h;
}

std::map<int, std::size_t> aoa_histogram(std::span<const WCQuestion> questions, HistogramKey key,
                                         const Lexicon& lexicon) {
    std::vector<double> values;
    for (const auto& q : questions) {
        if (key == HistogramKey::Pair) {
            if (q.pair_aoa) values.push_back(*q.pair_aoa);
            continue;
        }
        for (const auto* w : {&q.gold.first(), &q.gold.second()})
            if (const auto* e = find_word(lexicon, *w)) values.push_back(e->aoa_years);
    }
    return aoa_histogram(values);
}

std::vector<Question> order_by_aoa(std::vector<Question> questions) {
    std::stable_sort(questions.begin(), questions.end(), [](const Question& a, const Question& b) {
        const auto x = question_aoa(a);
        const auto y = question_aoa(b);
        if (!x || !y) return x.has_value() && !y.has_value();
        return *x < *y;
    });
    return questions;
}

}  // namespace agealign
