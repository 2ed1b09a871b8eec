#include "agealign/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "agealign/io.hpp"

namespace agealign {

int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Sequencing:
        case ErrorKind::State: return 409;
        case ErrorKind::InvalidArgument:
        case ErrorKind::InvalidScore:
        case ErrorKind::InvalidNorm:
        case ErrorKind::Parse:
        case ErrorKind::Template:
        case ErrorKind::Incomplete:
        case ErrorKind::UnknownAoa: return 422;
        case ErrorKind::Auth:
        case ErrorKind::RateLimit:
        case ErrorKind::Transport:
        case ErrorKind::Provider:
        case ErrorKind::MalformedResponse: return 502;
        default: return 500;
    }
}

struct ClinicianService::SessionEntry {
    std::mutex mutex;
    std::shared_ptr<const ExamSession> snapshot;
};

struct ClinicianService::ChecklistEntry {
    std::mutex mutex;
    std::shared_ptr<const ChecklistSession> snapshot;
};

namespace {

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_';
    });
}

ApiResponse error_response(int status, std::string_view kind, const std::string& message) {
    return {status, json{{"error", kind}, {"message", message}}};
}

template <class F>
ApiResponse guarded(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return error_response(http_status(e.kind()), to_string(e.kind()), e.what());
    } catch (const json::exception& e) {
        return error_response(422, "invalid_payload", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

std::shared_ptr<const ExamSession> load(const std::shared_ptr<const ExamSession>& p) { return std::atomic_load(&p); }

}  // namespace

ClinicianService::ClinicianService(ServiceConfig config) : config_(std::move(config)) {
    if (!config_.lm) throw Error(ErrorKind::InvalidArgument, "service needs a language model");
    std::filesystem::create_directories(config_.data_dir / "sessions");
    std::filesystem::create_directories(config_.data_dir / "checklists");
}

ClinicianService::~ClinicianService() = default;

std::string ClinicianService::new_id(const char* prefix) {
    static thread_local std::mt19937_64 gen{std::random_device{}()};
    std::lock_guard lock(registry_mutex_);
    for (;;) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%s%04llu-%08llx", prefix, static_cast<unsigned long long>(++counter_),
                      static_cast<unsigned long long>(gen() & 0xffffffffULL));
        std::string id = buf;
        if (!sessions_.count(id) && !checklists_.count(id) &&
            !std::filesystem::exists(config_.data_dir / "sessions" / (id + ".json")) &&
            !std::filesystem::exists(config_.data_dir / "checklists" / (id + ".json")))
            return id;
    }
}

std::shared_ptr<ClinicianService::SessionEntry> ClinicianService::session_entry(const std::string& id) {
    if (!valid_id(id)) throw Error(ErrorKind::NotFound, "unknown session '" + id + "'");
    std::lock_guard lock(registry_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    const auto path = config_.data_dir / "sessions" / (id + ".json");
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::NotFound, "unknown session '" + id + "'");
    auto entry = std::make_shared<SessionEntry>();
    entry->snapshot = std::make_shared<const ExamSession>(read_json(path).get<ExamSession>());
    sessions_[id] = entry;
    return entry;
}

std::shared_ptr<ClinicianService::ChecklistEntry> ClinicianService::checklist_entry(const std::string& id) {
    if (!valid_id(id)) throw Error(ErrorKind::NotFound, "unknown checklist '" + id + "'");
    std::lock_guard lock(registry_mutex_);
    if (auto it = checklists_.find(id); it != checklists_.end()) return it->second;
    const auto path = config_.data_dir / "checklists" / (id + ".json");
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::NotFound, "unknown checklist '" + id + "'");
    auto entry = std::make_shared<ChecklistEntry>();
    entry->snapshot = std::make_shared<const ChecklistSession>(read_json(path).get<ChecklistSession>());
    checklists_[id] = entry;
    return entry;
}

json ClinicianService::session_view(const ExamSession& s) const {
    json items = json::array();
    for (const auto& item : s.items()) {
        json ij = {{"question_id", question_id(item.question)}, {"state", to_string(item.state)}};
        ij["h"] = item.outcome ? json(item.outcome->h) : json(nullptr);
        items.push_back(std::move(ij));
    }
    const auto r = s.report(config_.norms ? &*config_.norms : nullptr);
    json obs = json::array();
    for (const auto& o : s.observations())
        obs.push_back({{"question_id", o.question_id}, {"tag", o.tag ? json(*o.tag) : json(nullptr)}, {"text", o.text}});
    return {{"id", s.id()},
            {"subtest", s.subtest()},
            {"status", to_string(s.status())},
            {"ceiling_k", s.ceiling_k()},
            {"consecutive_errors", s.consecutive_errors()},
            {"ceiling_warning", s.ceiling_k() > 0 && s.consecutive_errors() == s.ceiling_k() - 1},
            {"cursor", s.cursor()},
            {"raw_score", r.raw_score},
            {"max_score", r.max_score},
            {"percent", r.percent},
            {"items", std::move(items)},
            {"observations", std::move(obs)}};
}

ApiResponse ClinicianService::create_session(const json& body) {
    return guarded([&] {
        if (!body.is_object()) throw Error(ErrorKind::InvalidArgument, "body must be a JSON object");
        std::vector<Question> questions = body.at("questions").get<std::vector<Question>>();
        if (body.value("order", std::string("given")) == "aoa") questions = order_for_ceiling(questions);
        PromptProtocol protocol;
        const json& p = body.value("protocol", json("SLP"));
        if (p.is_string()) protocol = builtin_protocol(p.get<std::string>());
        else protocol = p.get<PromptProtocol>();
        SamplingConfig sampling;
        if (auto it = body.find("sampling"); it != body.end()) sampling = it->get<SamplingConfig>();
        std::string id = body.value("id", std::string());
        if (id.empty()) id = new_id("s");
        if (!valid_id(id)) throw Error(ErrorKind::InvalidArgument, "session id must match [A-Za-z0-9_-]{1,64}");

        auto session = std::make_shared<const ExamSession>(id, body.value("subtest", std::string("WC")),
                                                           std::move(questions), std::move(protocol),
                                                           std::move(sampling), body.value("ceiling_k", 4));
        std::lock_guard lock(registry_mutex_);
        const auto path = config_.data_dir / "sessions" / (id + ".json");
        if (sessions_.count(id) || std::filesystem::exists(path))
            throw Error(ErrorKind::State, "session '" + id + "' already exists");
        write_atomic(path, json(*session).dump());
        auto entry = std::make_shared<SessionEntry>();
        entry->snapshot = session;
        sessions_[id] = entry;
        return ApiResponse{201, session_view(*session)};
    });
}

ApiResponse ClinicianService::list_sessions() const {
    json out = json::array();
    std::set<std::string> ids;
    {
        std::lock_guard lock(registry_mutex_);
        for (const auto& [id, entry] : sessions_) ids.insert(id);
    }
    std::error_code ec;
    for (const auto& f : std::filesystem::directory_iterator(config_.data_dir / "sessions", ec))
        if (f.path().extension() == ".json") ids.insert(f.path().stem().string());
    for (const auto& id : ids) out.push_back(id);
    return {200, json{{"sessions", out}}};
}

ApiResponse ClinicianService::get_session(const std::string& id) {
    return guarded([&] {
        auto entry = session_entry(id);
        return ApiResponse{200, session_view(*load(entry->snapshot))};
    });
}

ApiResponse ClinicianService::next(const std::string& id) {
    return guarded([&] {
        auto entry = session_entry(id);
        std::lock_guard lock(entry->mutex);
        auto copy = std::make_shared<ExamSession>(*load(entry->snapshot));
        const auto before = copy->items()[std::min(copy->cursor(), copy->items().size() - 1)].state;
        auto item = copy->next(*config_.lm);
        json body = session_view(*copy);
        if (!item) {
            body["done"] = true;
            body["item"] = nullptr;
            return ApiResponse{200, body};
        }
        if (before == ItemState::Pending) {
            write_atomic(config_.data_dir / "sessions" / (id + ".json"), json(*copy).dump());
            std::atomic_store(&entry->snapshot, std::shared_ptr<const ExamSession>(copy));
        }
        body["done"] = false;
        body["item"] = {{"question_id", item->question_id},
                        {"index", item->index},
                        {"prompt", item->prompt},
                        {"response", item->response},
                        {"max_score", item->max_score}};
        return ApiResponse{200, body};
    });
}

ApiResponse ClinicianService::score(const std::string& id, const json& body) {
    return guarded([&] {
        auto entry = session_entry(id);
        if (!body.is_object() || !body.contains("question_id") || !body.contains("h"))
            throw Error(ErrorKind::InvalidArgument, "score needs question_id and h");
        if (!body.at("h").is_number_integer()) throw Error(ErrorKind::InvalidArgument, "h must be an integer");
        std::optional<std::string> note, tag;
        if (auto it = body.find("note"); it != body.end() && !it->is_null()) note = it->get<std::string>();
        if (auto it = body.find("tag"); it != body.end() && !it->is_null()) {
            tag = it->get<std::string>();
            const auto& tags = config_.observation_tags;
            if (std::find(tags.begin(), tags.end(), *tag) == tags.end())
                throw Error(ErrorKind::InvalidArgument, "unknown observation tag '" + *tag + "'");
        }
        std::lock_guard lock(entry->mutex);
        auto copy = std::make_shared<ExamSession>(*load(entry->snapshot));
        copy->record_score(body.at("question_id").get<std::string>(), body.at("h").get<int>(), note, tag);
        write_atomic(config_.data_dir / "sessions" / (id + ".json"), json(*copy).dump());
        std::atomic_store(&entry->snapshot, std::shared_ptr<const ExamSession>(copy));
        return ApiResponse{200, session_view(*copy)};
    });
}

ApiResponse ClinicianService::finish(const std::string& id) {
    return guarded([&] {
        auto entry = session_entry(id);
        std::lock_guard lock(entry->mutex);
        auto copy = std::make_shared<ExamSession>(*load(entry->snapshot));
        const auto r = copy->finish(config_.norms ? &*config_.norms : nullptr);
        write_atomic(config_.data_dir / "sessions" / (id + ".json"), json(*copy).dump());
        std::atomic_store(&entry->snapshot, std::shared_ptr<const ExamSession>(copy));
        return ApiResponse{200, json(r)};
    });
}

ApiResponse ClinicianService::report(const std::string& id) {
    return guarded([&] {
        auto entry = session_entry(id);
        const auto r = load(entry->snapshot)->report(config_.norms ? &*config_.norms : nullptr);
        return ApiResponse{200, json(r)};
    });
}

// ---- checklists ----

namespace {

std::shared_ptr<const ChecklistSession> load(const std::shared_ptr<const ChecklistSession>& p) {
    return std::atomic_load(&p);
}

json checklist_view(const ChecklistSession& s) { return json(s); }

}  // namespace

ApiResponse ClinicianService::create_checklist(const json& body) {
    return guarded([&] {
        auto session = body.get<ChecklistSession>();
        if (session.id.empty()) session.id = new_id("c");
        if (!valid_id(session.id)) throw Error(ErrorKind::InvalidArgument, "checklist id must match [A-Za-z0-9_-]{1,64}");
        if (session.items.empty()) throw Error(ErrorKind::InvalidArgument, "checklist has no items");
        std::lock_guard lock(registry_mutex_);
        const auto path = config_.data_dir / "checklists" / (session.id + ".json");
        if (checklists_.count(session.id) || std::filesystem::exists(path))
            throw Error(ErrorKind::State, "checklist '" + session.id + "' already exists");
        write_atomic(path, json(session).dump());
        auto entry = std::make_shared<ChecklistEntry>();
        entry->snapshot = std::make_shared<const ChecklistSession>(session);
        checklists_[session.id] = entry;
        return ApiResponse{201, checklist_view(session)};
    });
}

ApiResponse ClinicianService::get_checklist(const std::string& id) {
    return guarded([&] { return ApiResponse{200, checklist_view(*load(checklist_entry(id)->snapshot))}; });
}

ApiResponse ClinicianService::rate_checklist(const std::string& id, const json& body) {
    return guarded([&] {
        auto entry = checklist_entry(id);
        if (!body.is_object() || !body.contains("item_id") || !body.contains("rating"))
            throw Error(ErrorKind::InvalidArgument, "rating needs item_id and rating");
        std::lock_guard lock(entry->mutex);
        auto copy = std::make_shared<ChecklistSession>(*load(entry->snapshot));
        copy->rate(body.at("item_id").get<std::string>(), body.at("rating").get<int>());
        write_atomic(config_.data_dir / "checklists" / (id + ".json"), json(*copy).dump());
        std::atomic_store(&entry->snapshot, std::shared_ptr<const ChecklistSession>(copy));
        return ApiResponse{200, checklist_view(*copy)};
    });
}

ApiResponse ClinicianService::set_checklist_mode(const std::string& id, const json& body) {
    return guarded([&] {
        auto entry = checklist_entry(id);
        std::lock_guard lock(entry->mutex);
        auto copy = std::make_shared<ChecklistSession>(*load(entry->snapshot));
        copy->mode = parse_checklist_mode(body.at("mode").get<std::string>());
        write_atomic(config_.data_dir / "checklists" / (id + ".json"), json(*copy).dump());
        std::atomic_store(&entry->snapshot, std::shared_ptr<const ChecklistSession>(copy));
        return ApiResponse{200, checklist_view(*copy)};
    });
}

ApiResponse ClinicianService::score_checklist(const std::string& id) {
    return guarded([&] {
        const auto snap = load(checklist_entry(id)->snapshot);
        return ApiResponse{200, json(agealign::score_checklist(*snap, config_.norms ? &*config_.norms : nullptr))};
    });
}

ApiResponse ClinicianService::tags() const { return {200, json{{"tags", config_.observation_tags}}}; }

void ClinicianService::install(httplib::Server& server) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const httplib::Request& req) -> std::optional<json> {
        auto j = json::parse(req.body, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        return j;
    };
    auto with_body = [=](auto handler) {
        return [=](const httplib::Request& req, httplib::Response& res) {
            auto body = parse(req);
            if (!body) return send(res, error_response(422, "invalid_payload", "request body is not valid JSON"));
            send(res, handler(req, *body));
        };
    };

    if (config_.token) {
        server.set_pre_routing_handler([token = *config_.token](const httplib::Request& req, httplib::Response& res) {
            if (req.get_header_value("Authorization") == "Bearer " + token) return httplib::Server::HandlerResponse::Unhandled;
            res.status = 401;
            res.set_content(R"({"error":"auth","message":"missing or invalid bearer token"})", "application/json");
            return httplib::Server::HandlerResponse::Handled;
        });
    }

    server.Post("/sessions", with_body([this](const httplib::Request&, const json& b) { return create_session(b); }));
    server.Get("/sessions", [=, this](const httplib::Request&, httplib::Response& res) { send(res, list_sessions()); });
    server.Get(R"(/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, get_session(req.matches[1]));
    });
    server.Get(R"(/sessions/([^/]+)/next)", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, next(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/score)",
                with_body([this](const httplib::Request& req, const json& b) { return score(req.matches[1], b); }));
    server.Post(R"(/sessions/([^/]+)/finish)", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, finish(req.matches[1]));
    });
    server.Get(R"(/sessions/([^/]+)/report)", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, report(req.matches[1]));
    });

    server.Post("/checklists",
                with_body([this](const httplib::Request&, const json& b) { return create_checklist(b); }));
    server.Get(R"(/checklists/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, get_checklist(req.matches[1]));
    });
    server.Post(R"(/checklists/([^/]+)/rate)", with_body([this](const httplib::Request& req, const json& b) {
                    return rate_checklist(req.matches[1], b);
                }));
    server.Post(R"(/checklists/([^/]+)/mode)", with_body([this](const httplib::Request& req, const json& b) {
                    return set_checklist_mode(req.matches[1], b);
                }));
    server.Get(R"(/checklists/([^/]+)/score)", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, score_checklist(req.matches[1]));
    });
    server.Get("/tags", [=, this](const httplib::Request&, httplib::Response& res) { send(res, tags()); });
}

}  // namespace agealign
