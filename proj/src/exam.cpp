#include "agealign/exam.hpp"

#include <algorithm>
#include <cmath>

#include "agealign/builder.hpp"
#include "agealign/io.hpp"

namespace agealign {

int auto_score(const Question& question, const LMResponse& response) {
    if (const auto* wc = std::get_if<WCQuestion>(&question)) {
        if (response.extracted.size() != 2) return 0;
        return WordPair(response.extracted[0], response.extracted[1]) == wc->gold ? 1 : 0;
    }
    if (const auto* def = std::get_if<DefQuestion>(&question)) {
        return response.extracted.size() == 1 && to_lower(response.extracted[0]) == to_lower(def->target) ? 1 : 0;
    }
    throw Error(ErrorKind::InvalidArgument, question_id(question) + ": free-form questions need a clinician score");
}

CeilingTracker::CeilingTracker(int k) : k_(k) {
    if (k < 0) throw Error(ErrorKind::InvalidArgument, "ceiling must be non-negative");
}

bool CeilingTracker::record(int h) {
    if (stopped_) throw Error(ErrorKind::State, "ceiling already reached");
    run_ = h == 0 ? run_ + 1 : 0;
    stopped_ = k_ > 0 && run_ >= k_;
    return stopped_;
}

SubtestRun run_subtest(std::span<const Question> questions, const PromptProtocol& protocol,
                       const SamplingConfig& sampling, int ceiling_k, LanguageModel& lm, int max_in_flight) {
    if (questions.empty()) throw Error(ErrorKind::InvalidArgument, "no questions to administer");
    sampling.validate();
    CeilingTracker ceiling(ceiling_k);
    SubtestRun run;

    const std::size_t batch = ceiling_k > 0 ? 1 : static_cast<std::size_t>(std::max(1, max_in_flight));
    for (std::size_t start = 0; start < questions.size() && !run.stopped_early; start += batch) {
        const auto chunk = questions.subspan(start, std::min(batch, questions.size() - start));
        std::vector<LMResponse> answers;
        try {
            answers = batch == 1 ? std::vector<LMResponse>{ask(lm, protocol, chunk[0], sampling)}
                                 : ask_all(lm, protocol, chunk, sampling, max_in_flight);
        } catch (const Error& e) {
            run.aborted_kind = e.kind();
            run.aborted_message = e.what();
            break;
        }
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            Outcome o{question_id(chunk[i]), auto_score(chunk[i], answers[i]), Scorer::Auto, std::nullopt};
            run.raw_score += o.h;
            run.responses.push_back(std::move(answers[i]));
            run.outcomes.push_back(std::move(o));
            if (ceiling.record(run.outcomes.back().h)) {
                run.stopped_early = true;
                break;
            }
        }
    }
    return run;
}

std::vector<Question> order_for_ceiling(std::span<const Question> questions) {
    std::vector<Question> out(questions.begin(), questions.end());
    std::stable_sort(out.begin(), out.end(), [](const Question& a, const Question& b) {
        const auto x = question_aoa(a), y = question_aoa(b);
        if (x && y) return *x < *y;
        return x.has_value() && !y.has_value();
    });
    return out;
}

AgeEquivalent lookup_age_equivalent(const NormTable& table, const std::string& subtest, long raw_score) {
    auto it = table.subtests.find(subtest);
    if (it == table.subtests.end()) throw Error(ErrorKind::NotFound, "norm table has no subtest '" + subtest + "'");
    const auto& norms = it->second;
    if (raw_score < 0 || raw_score > norms.max_raw)
        throw Error(ErrorKind::InvalidScore, "score " + std::to_string(raw_score) + " outside [0, " +
                                                 std::to_string(norms.max_raw) + "]");
    for (const auto& band : norms.bands)
        if (raw_score >= band.min_raw && raw_score <= band.max_raw) return band.age;
    throw Error(ErrorKind::InvalidNorm, subtest + ": no band covers score " + std::to_string(raw_score));
}

NormTable load_norm_table(const std::filesystem::path& path) {
    auto table = read_json(path).get<NormTable>();
    table.validate();
    return table;
}

// ---- sessions ----

std::string to_string(ItemState s) {
    switch (s) {
        case ItemState::Pending: return "pending";
        case ItemState::Responded: return "responded";
        case ItemState::Scored: return "scored";
    }
    return "pending";
}

std::string to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::Active: return "active";
        case SessionStatus::CeilingStopped: return "ceiling_stopped";
        case SessionStatus::Completed: return "completed";
    }
    return "active";
}

namespace {

ItemState parse_item_state(std::string_view s) {
    if (s == "pending") return ItemState::Pending;
    if (s == "responded") return ItemState::Responded;
    if (s == "scored") return ItemState::Scored;
    throw Error(ErrorKind::Parse, "unknown item state '" + std::string(s) + "'");
}

SessionStatus parse_session_status(std::string_view s) {
    if (s == "active") return SessionStatus::Active;
    if (s == "ceiling_stopped") return SessionStatus::CeilingStopped;
    if (s == "completed") return SessionStatus::Completed;
    throw Error(ErrorKind::Parse, "unknown session status '" + std::string(s) + "'");
}

}  // namespace

const std::vector<std::string>& default_observation_tags() {
    static const std::vector<std::string> tags = {"functional relation", "category", "antonym", "inference",
                                                  "context"};
    return tags;
}

ExamSession::ExamSession(std::string id, std::string subtest, std::vector<Question> questions,
                         PromptProtocol protocol, SamplingConfig sampling, int ceiling_k)
    : id_(std::move(id)),
      subtest_(std::move(subtest)),
      protocol_(std::move(protocol)),
      sampling_(std::move(sampling)),
      ceiling_k_(ceiling_k) {
    if (questions.empty()) throw Error(ErrorKind::InvalidArgument, "session needs at least one question");
    if (ceiling_k < 0) throw Error(ErrorKind::InvalidArgument, "ceiling must be non-negative");
    sampling_.validate();
    for (auto& q : questions) items_.push_back(SessionItem{std::move(q), ItemState::Pending, {}, {}, {}});
}

std::size_t ExamSession::cursor() const {
    std::size_t i = 0;
    while (i < items_.size() && items_[i].state == ItemState::Scored) ++i;
    return i;
}

std::optional<PresentedItem> ExamSession::next(LanguageModel& lm) {
    if (status_ != SessionStatus::Active) return std::nullopt;
    const auto i = cursor();
    if (i == items_.size()) return std::nullopt;
    auto& item = items_[i];
    if (item.state == ItemState::Pending) {
        item.prompt = render_prompt(protocol_, item.question);
        item.response = ask(lm, protocol_, item.question, sampling_);
        item.state = ItemState::Responded;
    }
    return PresentedItem{question_id(item.question), i, *item.prompt, *item.response,
                         question_max_score(item.question)};
}

void ExamSession::record_score(const std::string& question_id, int h, std::optional<std::string> note,
                               std::optional<std::string> tag) {
    if (status_ != SessionStatus::Active)
        throw Error(ErrorKind::State, "session " + id_ + " is " + to_string(status_));
    const auto i = cursor();
    if (i == items_.size() || agealign::question_id(items_[i].question) != question_id ||
        items_[i].state != ItemState::Responded)
        throw Error(ErrorKind::Sequencing, "question '" + question_id + "' is not the one being presented");
    auto& item = items_[i];
    const int max = question_max_score(item.question);
    if (h < 0 || h > max)
        throw Error(ErrorKind::InvalidScore, "score " + std::to_string(h) + " outside [0, " + std::to_string(max) + "]");

    item.outcome = Outcome{question_id, h, Scorer::Clinician, note};
    item.state = ItemState::Scored;
    if (note || tag) observations_.push_back(Observation{question_id, std::move(tag), note.value_or("")});

    consecutive_errors_ = h == 0 ? consecutive_errors_ + 1 : 0;
    if (ceiling_k_ > 0 && consecutive_errors_ >= ceiling_k_) status_ = SessionStatus::CeilingStopped;
    else if (cursor() == items_.size()) status_ = SessionStatus::Completed;
}

long ExamSession::raw_score() const {
    long s = 0;
    for (const auto& item : items_)
        if (item.outcome) s += item.outcome->h;
    return s;
}

long ExamSession::max_score() const {
    long s = 0;
    for (const auto& item : items_) s += question_max_score(item.question);
    return s;
}

SessionReport ExamSession::finish(const NormTable* norms) {
    if (status_ == SessionStatus::Active) status_ = SessionStatus::Completed;
    return report(norms);
}

SessionReport ExamSession::report(const NormTable* norms) const {
    SessionReport r;
    r.session_id = id_;
    r.subtest = subtest_;
    r.status = status_;
    for (const auto& item : items_)
        if (item.outcome) r.outcomes.push_back(*item.outcome);
    r.raw_score = raw_score();
    r.max_score = max_score();
    if (norms) {
        if (auto it = norms->subtests.find(subtest_); it != norms->subtests.end()) {
            r.max_score = it->second.max_raw;
            r.age = lookup_age_equivalent(*norms, subtest_, r.raw_score);
        }
    }
    r.percent = normalize_score(r.raw_score, r.max_score);
    r.observations = observations_;
    return r;
}

void to_json(json& j, const ExamSession& s) {
    json items = json::array();
    for (const auto& item : s.items_) {
        json ij = {{"question", item.question}, {"state", to_string(item.state)}};
        ij["prompt"] = item.prompt ? json(*item.prompt) : json(nullptr);
        ij["response"] = item.response ? json(*item.response) : json(nullptr);
        ij["outcome"] = item.outcome ? json(*item.outcome) : json(nullptr);
        items.push_back(std::move(ij));
    }
    json obs = json::array();
    for (const auto& o : s.observations_)
        obs.push_back({{"question_id", o.question_id}, {"tag", o.tag ? json(*o.tag) : json(nullptr)}, {"text", o.text}});
    j = json{{"id", s.id_},
             {"subtest", s.subtest_},
             {"protocol", s.protocol_},
             {"sampling", s.sampling_},
             {"ceiling_k", s.ceiling_k_},
             {"consecutive_errors", s.consecutive_errors_},
             {"status", to_string(s.status_)},
             {"items", std::move(items)},
             {"observations", std::move(obs)}};
}

void from_json(const json& j, ExamSession& s) {
    s.id_ = j.at("id").get<std::string>();
    s.subtest_ = j.at("subtest").get<std::string>();
    s.protocol_ = j.at("protocol").get<PromptProtocol>();
    s.sampling_ = j.at("sampling").get<SamplingConfig>();
    s.ceiling_k_ = j.at("ceiling_k").get<int>();
    s.consecutive_errors_ = j.at("consecutive_errors").get<int>();
    s.status_ = parse_session_status(j.at("status").get<std::string>());
    s.items_.clear();
    for (const auto& ij : j.at("items")) {
        SessionItem item;
        item.question = ij.at("question").get<Question>();
        item.state = parse_item_state(ij.at("state").get<std::string>());
        if (!ij.at("prompt").is_null()) item.prompt = ij.at("prompt").get<std::string>();
        if (!ij.at("response").is_null()) item.response = ij.at("response").get<LMResponse>();
        if (!ij.at("outcome").is_null()) item.outcome = ij.at("outcome").get<Outcome>();
        s.items_.push_back(std::move(item));
    }
    s.observations_.clear();
    for (const auto& oj : j.at("observations")) {
        Observation o;
        o.question_id = oj.at("question_id").get<std::string>();
        if (!oj.at("tag").is_null()) o.tag = oj.at("tag").get<std::string>();
        o.text = oj.at("text").get<std::string>();
        s.observations_.push_back(std::move(o));
    }
}

void to_json(json& j, const SessionReport& r) {
    json obs = json::array();
    for (const auto& o : r.observations)
        obs.push_back({{"question_id", o.question_id}, {"tag", o.tag ? json(*o.tag) : json(nullptr)}, {"text", o.text}});
    j = json{{"session_id", r.session_id},
             {"subtest", r.subtest},
             {"status", to_string(r.status)},
             {"outcomes", r.outcomes},
             {"raw_score", r.raw_score},
             {"max_score", r.max_score},
             {"percent", r.percent},
             {"age", r.age ? json(*r.age) : json(nullptr)},
             {"observations", std::move(obs)}};
}

// ---- checklists ----

std::string to_string(ChecklistMode m) {
    switch (m) {
        case ChecklistMode::PenalizeInapplicable: return "penalize_inapplicable";
        case ChecklistMode::RestrictToApplicable: return "restrict_to_applicable";
        case ChecklistMode::Extrapolate: return "extrapolate";
    }
    return "restrict_to_applicable";
}

ChecklistMode parse_checklist_mode(std::string_view s) {
    if (s == "penalize_inapplicable" || s == "penalize") return ChecklistMode::PenalizeInapplicable;
    if (s == "restrict_to_applicable" || s == "restrict") return ChecklistMode::RestrictToApplicable;
    if (s == "extrapolate") return ChecklistMode::Extrapolate;
    throw Error(ErrorKind::Parse, "unknown checklist mode '" + std::string(s) + "'");
}

void ChecklistSession::rate(const std::string& item_id, int rating) {
    if (rating != 0 && rating != 1) throw Error(ErrorKind::InvalidScore, "checklist ratings are 0 or 1");
    for (auto& item : items) {
        if (item.id != item_id) continue;
        if (!item.applicable && mode != ChecklistMode::PenalizeInapplicable)
            throw Error(ErrorKind::State, "item '" + item_id + "' is not applicable");
        item.rating = rating;
        return;
    }
    throw Error(ErrorKind::NotFound, "no checklist item '" + item_id + "'");
}

ChecklistScore score_checklist(const ChecklistSession& session, const NormTable* norms) {
    if (session.items.empty()) throw Error(ErrorKind::InvalidArgument, "checklist has no items");
    ChecklistScore s;
    long applicable = 0;
    std::vector<std::string> missing;
    for (const auto& item : session.items) {
        if (!item.applicable) continue;
        ++applicable;
        if (!item.rating) missing.push_back(item.id);
        else s.raw += *item.rating;
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(ErrorKind::Incomplete, "unrated applicable items: " + list);
    }
    const long total = static_cast<long>(session.items.size());
    long lookup_raw = s.raw;
    switch (session.mode) {
        case ChecklistMode::PenalizeInapplicable:
            s.denominator = total;
            break;
        case ChecklistMode::RestrictToApplicable:
            s.denominator = applicable;
            break;
        case ChecklistMode::Extrapolate:
            s.denominator = applicable;
            if (applicable > 0) {
                s.extrapolated_raw = std::lround(static_cast<double>(s.raw) * static_cast<double>(total) /
                                                 static_cast<double>(applicable));
                lookup_raw = *s.extrapolated_raw;
            }
            break;
    }
    if (s.denominator == 0) throw Error(ErrorKind::Incomplete, "no applicable checklist items");
    s.percent = normalize_score(s.raw, s.denominator);
    if (norms && norms->subtests.count(session.subtest))
        s.age = lookup_age_equivalent(*norms, session.subtest, lookup_raw);
    return s;
}

void to_json(json& j, const ChecklistSession& s) {
    json items = json::array();
    for (const auto& item : s.items)
        items.push_back({{"id", item.id},
                         {"description", item.description},
                         {"applicable", item.applicable},
                         {"rating", item.rating ? json(*item.rating) : json(nullptr)}});
    j = json{{"id", s.id}, {"subtest", s.subtest}, {"mode", to_string(s.mode)}, {"items", std::move(items)}};
}

void from_json(const json& j, ChecklistSession& s) {
    s.id = j.value("id", std::string());
    s.subtest = j.value("subtest", std::string("PPC"));
    s.mode = parse_checklist_mode(j.value("mode", std::string("restrict_to_applicable")));
    s.items.clear();
    for (const auto& ij : j.at("items")) {
        ChecklistItem item;
        item.id = ij.at("id").get<std::string>();
        item.description = ij.value("description", std::string());
        item.applicable = ij.value("applicable", true);
        if (auto it = ij.find("rating"); it != ij.end() && !it->is_null()) item.rating = it->get<int>();
        s.items.push_back(std::move(item));
    }
}

void to_json(json& j, const ChecklistScore& s) {
    j = json{{"raw", s.raw},
             {"denominator", s.denominator},
             {"percent", s.percent},
             {"extrapolated_raw", s.extrapolated_raw ? json(*s.extrapolated_raw) : json(nullptr)},
             {"age", s.age ? json(*s.age) : json(nullptr)}};
}

}  // namespace agealign
