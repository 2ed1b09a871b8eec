#include "agealign/types.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "agealign/error.hpp"

namespace agealign {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::InvalidNorm: return "invalid-norm";
        case ErrorKind::InvalidScore: return "invalid-score";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::UnknownAoa: return "unknown-aoa";
        case ErrorKind::Build: return "build";
        case ErrorKind::Template: return "template";
        case ErrorKind::Auth: return "auth";
        case ErrorKind::RateLimit: return "rate-limit";
        case ErrorKind::MalformedResponse: return "malformed-response";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Provider: return "provider";
        case ErrorKind::Sequencing: return "sequencing";
        case ErrorKind::State: return "state";
        case ErrorKind::Incomplete: return "incomplete";
        case ErrorKind::Rank: return "rank";
        case ErrorKind::Join: return "join";
        case ErrorKind::Infeasible: return "infeasible";
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::NotFound: return "not-found";
    }
    return "unknown";
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

WordPair::WordPair(std::string a, std::string b) : first_(std::move(a)), second_(std::move(b)) {
    if (second_ < first_) std::swap(first_, second_);
}

const std::string& question_id(const Question& q) {
    return std::visit([](const auto& v) -> const std::string& { return v.id; }, q);
}

std::optional<double> question_aoa(const Question& q) {
    if (const auto* wc = std::get_if<WCQuestion>(&q)) return wc->pair_aoa;
    if (const auto* def = std::get_if<DefQuestion>(&q)) return def->aoa;
    return std::get<FreeQuestion>(q).aoa;
}

int question_max_score(const Question& q) {
    if (const auto* free = std::get_if<FreeQuestion>(&q)) return free->max_score;
    return 1;
}

void validate(const WCQuestion& q) {
    std::set<std::string> distinct(q.words.begin(), q.words.end());
    if (distinct.size() != 4) throw Error(ErrorKind::InvalidArgument, q.id + ": presented words not distinct");
    if (!distinct.count(q.gold.first()) || !distinct.count(q.gold.second()))
        throw Error(ErrorKind::InvalidArgument, q.id + ": gold pair not among presented words");
    if (q.gold.first() == q.gold.second())
        throw Error(ErrorKind::InvalidArgument, q.id + ": gold pair repeats a word");
}

void validate(const DefQuestion& q) {
    std::set<std::string> distinct(q.choices.begin(), q.choices.end());
    if (distinct.size() != 4) throw Error(ErrorKind::InvalidArgument, q.id + ": choices not distinct");
    if (!distinct.count(q.target)) throw Error(ErrorKind::InvalidArgument, q.id + ": target not among choices");
}

SamplingConfig SamplingConfig::factual(std::string model_id) {
    SamplingConfig c;
    c.model_id = std::move(model_id);
    c.top_p = 1.0;
    c.temperature = 0.0;
    return c;
}

void SamplingConfig::validate() const {
    if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::InvalidArgument, "top_p must lie in (0, 1]");
    if (!(temperature >= 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be >= 0");
    if (max_tokens <= 0) throw Error(ErrorKind::InvalidArgument, "max_tokens must be positive");
}

std::string SamplingConfig::fingerprint() const {
    // FNV-1a over the canonical (key-sorted) JSON dump.
    const std::string canon = json(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double normalize_score(long raw, long max) {
    if (max <= 0) throw Error(ErrorKind::InvalidNorm, "maximum score must be positive");
    if (raw < 0 || raw > max) throw Error(ErrorKind::InvalidScore, "raw score outside [0, max]");
    return 100.0 * static_cast<double>(raw) / static_cast<double>(max);
}

std::string format_age(double years) {
    if (!(years >= 0.0)) throw Error(ErrorKind::InvalidArgument, "age must be non-negative");
    auto y = static_cast<long>(std::floor(years));
    auto m = static_cast<long>(std::floor((years - static_cast<double>(y)) * 12.0 + 1e-9));
    if (m >= 12) {
        ++y;
        m -= 12;
    }
    return std::to_string(y) + ":" + std::to_string(m);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

long parse_long(std::string_view s, std::string_view context) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorKind::Parse, "bad age '" + std::string(context) + "'");
    return v;
}

}  // namespace

double parse_age(std::string_view text) {
    const auto s = trim(text);
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) return static_cast<double>(parse_long(s, text));
    const long y = parse_long(trim(s.substr(0, colon)), text);
    const long m = parse_long(trim(s.substr(colon + 1)), text);
    if (m < 0 || m >= 12) throw Error(ErrorKind::Parse, "month out of range in '" + std::string(text) + "'");
    return static_cast<double>(y) + static_cast<double>(m) / 12.0;
}

AgeEquivalent parse_age_label(std::string_view label) {
    AgeEquivalent age;
    age.label = std::string(trim(label));
    std::string_view s = trim(label);
    if (!s.empty() && s.front() == '<') {
        age.kind = AgeEquivalent::Kind::BelowFloor;
        s.remove_prefix(1);
    } else if (!s.empty() && s.back() == '+') {
        age.kind = AgeEquivalent::Kind::AboveCeiling;
        s.remove_suffix(1);
    }
    age.years = parse_age(s);
    return age;
}

void NormTable::validate() const {
    for (const auto& [name, norms] : subtests) {
        if (norms.max_raw <= 0) throw Error(ErrorKind::InvalidNorm, name + ": max raw score must be positive");
        if (norms.bands.empty()) throw Error(ErrorKind::InvalidNorm, name + ": no bands");
        int expected_min = 0;
        double last_age = -1.0;
        for (const auto& band : norms.bands) {
            if (band.min_raw != expected_min)
                throw Error(ErrorKind::InvalidNorm, name + ": bands must be contiguous from 0 (gap or overlap at " +
                                                        std::to_string(band.min_raw) + ")");
            if (band.max_raw < band.min_raw) throw Error(ErrorKind::InvalidNorm, name + ": empty band");
            if (band.age.years < last_age) throw Error(ErrorKind::InvalidNorm, name + ": ages decrease with score");
            last_age = band.age.years;
            expected_min = band.max_raw + 1;
        }
        if (norms.bands.back().max_raw != norms.max_raw)
            throw Error(ErrorKind::InvalidNorm, name + ": bands do not reach the maximum score");
    }
}

std::string to_string(AgeMode m) { return m == AgeMode::Exact ? "exact" : "at_most"; }
std::string to_string(AgeTestKind k) { return k == AgeTestKind::Means ? "means" : "td"; }
std::string to_string(Scorer s) { return s == Scorer::Auto ? "auto" : "clinician"; }

AgeMode parse_age_mode(std::string_view s) {
    if (s == "exact") return AgeMode::Exact;
    if (s == "at_most") return AgeMode::AtMost;
    throw Error(ErrorKind::InvalidArgument, "unknown age mode '" + std::string(s) + "'");
}

AgeTestKind parse_age_test_kind(std::string_view s) {
    if (s == "means") return AgeTestKind::Means;
    if (s == "td") return AgeTestKind::TD;
    throw Error(ErrorKind::InvalidArgument, "unknown test kind '" + std::string(s) + "'");
}

// ---- JSON ----

namespace {

template <class T>
std::optional<T> opt_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

template <class T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

}  // namespace

void to_json(json& j, const WordEntry& v) {
    j = json{{"lemma", v.lemma}, {"aoa_years", v.aoa_years}};
    put_opt(j, "morph_count", v.morph_feature_count);
    put_opt(j, "pos", v.pos_hint);
    put_opt(j, "definition", v.definition);
}

void from_json(const json& j, WordEntry& v) {
    v.lemma = j.at("lemma").get<std::string>();
    v.aoa_years = j.at("aoa_years").get<double>();
    v.morph_feature_count = opt_field<int>(j, "morph_count");
    v.pos_hint = opt_field<std::string>(j, "pos");
    v.definition = opt_field<std::string>(j, "definition");
}

void to_json(json& j, const AssociationRecord& v) {
    j = json{{"cue", v.cue}, {"association", v.association}, {"relation", v.relation}, {"explanation", v.explanation}};
}

void from_json(const json& j, AssociationRecord& v) {
    v.cue = j.at("cue").get<std::string>();
    v.association = j.at("association").get<std::string>();
    v.relation = j.value("relation", std::string("unknown"));
    v.explanation = j.value("explanation", std::string());
}

void to_json(json& j, const WordPair& v) { j = json::array({v.first(), v.second()}); }

void from_json(const json& j, WordPair& v) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::Parse, "word pair must be a 2-element array");
    v = WordPair(j[0].get<std::string>(), j[1].get<std::string>());
}

void to_json(json& j, const WCQuestion& v) {
    j = json{{"kind", "wc"},
             {"id", v.id},
             {"words", v.words},
             {"gold_pair", v.gold},
             {"pair_aoa", v.pair_aoa ? json(*v.pair_aoa) : json(nullptr)},
             {"relation", v.relation},
             {"explanation", v.explanation}};
    if (v.features) {
        json f = json::object();
        put_opt(f, "pos_signature", v.features->pos_signature);
        put_opt(f, "morph_class", v.features->morph_class);
        j["features"] = f;
    }
}

void from_json(const json& j, WCQuestion& v) {
    v.id = j.at("id").get<std::string>();
    v.words = j.at("words").get<std::array<std::string, 4>>();
    v.gold = j.at("gold_pair").get<WordPair>();
    v.pair_aoa = opt_field<double>(j, "pair_aoa");
    v.relation = j.value("relation", std::string("unknown"));
    v.explanation = j.value("explanation", std::string());
    v.features.reset();
    if (auto it = j.find("features"); it != j.end() && it->is_object()) {
        FeatureAnnotations f;
        f.pos_signature = opt_field<std::array<std::string, 2>>(*it, "pos_signature");
        f.morph_class = opt_field<std::string>(*it, "morph_class");
        v.features = f;
    }
}

void to_json(json& j, const DefQuestion& v) {
    j = json{{"kind", "def"},   {"id", v.id},           {"target", v.target},
             {"definition", v.definition}, {"choices", v.choices}, {"aoa", v.aoa}};
}

void from_json(const json& j, DefQuestion& v) {
    v.id = j.at("id").get<std::string>();
    v.target = j.at("target").get<std::string>();
    v.definition = j.at("definition").get<std::string>();
    v.choices = j.at("choices").get<std::array<std::string, 4>>();
    v.aoa = j.at("aoa").get<double>();
}

void to_json(json& j, const FreeQuestion& v) {
    j = json{{"kind", "free"}, {"id", v.id}, {"prompt", v.prompt}, {"max_score", v.max_score}};
    put_opt(j, "aoa", v.aoa);
}

void from_json(const json& j, FreeQuestion& v) {
    v.id = j.at("id").get<std::string>();
    v.prompt = j.at("prompt").get<std::string>();
    v.max_score = j.value("max_score", 1);
    v.aoa = opt_field<double>(j, "aoa");
}

void to_json(json& j, const Question& v) {
    std::visit([&j](const auto& q) { to_json(j, q); }, v);
}

void from_json(const json& j, Question& v) {
    const std::string kind = j.value("kind", std::string("wc"));
    if (kind == "wc") v = j.get<WCQuestion>();
    else if (kind == "def") v = j.get<DefQuestion>();
    else if (kind == "free") v = j.get<FreeQuestion>();
    else throw Error(ErrorKind::Parse, "unknown question kind '" + kind + "'");
}

void to_json(json& j, const PromptProtocol& v) { j = json{{"name", v.name}, {"template", v.template_text}}; }

void from_json(const json& j, PromptProtocol& v) {
    v.name = j.at("name").get<std::string>();
    v.template_text = j.at("template").get<std::string>();
}

void to_json(json& j, const SamplingConfig& v) {
    j = json{{"model", v.model_id}, {"top_p", v.top_p}, {"temperature", v.temperature}, {"max_tokens", v.max_tokens}};
}

void from_json(const json& j, SamplingConfig& v) {
    SamplingConfig d;
    v.model_id = j.value("model", d.model_id);
    v.top_p = j.value("top_p", d.top_p);
    v.temperature = j.value("temperature", d.temperature);
    v.max_tokens = j.value("max_tokens", d.max_tokens);
}

void to_json(json& j, const LMResponse& v) {
    j = json{{"question_id", v.question_id},
             {"raw_text", v.raw_text},
             {"extracted", v.extracted},
             {"has_explanation", v.has_explanation},
             {"config_fingerprint", v.metadata.config_fingerprint},
             {"started_at", v.metadata.started_at},
             {"finished_at", v.metadata.finished_at},
             {"retries", v.metadata.retries}};
}

void from_json(const json& j, LMResponse& v) {
    v.question_id = j.at("question_id").get<std::string>();
    v.raw_text = j.at("raw_text").get<std::string>();
    v.extracted = j.value("extracted", std::vector<std::string>{});
    v.has_explanation = j.value("has_explanation", false);
    v.metadata.config_fingerprint = j.value("config_fingerprint", std::string());
    v.metadata.started_at = j.value("started_at", std::string());
    v.metadata.finished_at = j.value("finished_at", std::string());
    v.metadata.retries = j.value("retries", 0);
}

void to_json(json& j, const Outcome& v) {
    j = json{{"question_id", v.question_id}, {"h", v.h}, {"scorer", to_string(v.scorer)}};
    put_opt(j, "note", v.note);
}

void from_json(const json& j, Outcome& v) {
    v.question_id = j.at("question_id").get<std::string>();
    v.h = j.at("h").get<int>();
    const auto scorer = j.value("scorer", std::string("auto"));
    if (scorer == "auto") v.scorer = Scorer::Auto;
    else if (scorer == "clinician") v.scorer = Scorer::Clinician;
    else throw Error(ErrorKind::Parse, "unknown scorer '" + scorer + "'");
    v.note = opt_field<std::string>(j, "note");
}

void to_json(json& j, const AgeEquivalent& v) {
    const char* kind = v.kind == AgeEquivalent::Kind::Exact        ? "exact"
                       : v.kind == AgeEquivalent::Kind::BelowFloor ? "below_floor"
                                                                   : "above_ceiling";
    j = json{{"kind", kind}, {"years", v.years}, {"label", v.label}};
}

void to_json(json& j, const NormTable& v) {
    j = json::object();
    for (const auto& [name, norms] : v.subtests) {
        json bands = json::array();
        for (const auto& b : norms.bands) bands.push_back({{"min", b.min_raw}, {"max", b.max_raw}, {"age", b.age.label}});
        j[name] = {{"max_raw", norms.max_raw}, {"bands", bands}};
    }
}

void from_json(const json& j, NormTable& v) {
    const json& root = j.contains("subtests") ? j.at("subtests") : j;
    v.subtests.clear();
    for (const auto& [name, body] : root.items()) {
        SubtestNorms norms;
        norms.max_raw = body.at("max_raw").get<int>();
        for (const auto& b : body.at("bands")) {
            NormBand band;
            band.min_raw = b.at("min").get<int>();
            band.max_raw = b.at("max").get<int>();
            band.age = parse_age_label(b.at("age").get<std::string>());
            norms.bands.push_back(std::move(band));
        }
        v.subtests.emplace(name, std::move(norms));
    }
    v.validate();
}

void to_json(json& j, const AgeTestResult& v) {
    j = json{{"age", v.age_years},      {"mode", to_string(v.mode)}, {"test", to_string(v.test_kind)},
             {"statistic", v.statistic}, {"p_value", v.p_value},      {"alpha", v.alpha},
             {"reject", v.reject},       {"n", v.n}};
}

void from_json(const json& j, AgeTestResult& v) {
    v.age_years = j.at("age").get<double>();
    v.mode = parse_age_mode(j.at("mode").get<std::string>());
    v.test_kind = parse_age_test_kind(j.at("test").get<std::string>());
    v.statistic = j.at("statistic").get<double>();
    v.p_value = j.at("p_value").get<double>();
    v.alpha = j.at("alpha").get<double>();
    v.reject = j.at("reject").get<bool>();
    v.n = j.at("n").get<long>();
}

}  // namespace agealign
