#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agealign/exam.hpp"
#include "agealign/gateway.hpp"

namespace httplib {
class Server;
}

namespace agealign {

struct ServiceConfig {
    std::filesystem::path data_dir;
    std::shared_ptr<LanguageModel> lm;
    std::optional<NormTable> norms;
    std::optional<std::string> token;  // shared bearer token; empty disables auth
    std::vector<std::string> observation_tags = default_observation_tags();
};

/// JSON status + body returned by every endpoint handler.
struct ApiResponse {
    int status = 200;
    json body;
};

/// Session store and request handlers behind the clinician HTTP API. One JSON
/// file per session under data_dir/sessions, replaced atomically on every
/// mutation. Mutations on one session are serialized; reads use the last
/// published snapshot.
class ClinicianService {
public:
    explicit ClinicianService(ServiceConfig config);
    ~ClinicianService();

    ApiResponse create_session(const json& body);
    ApiResponse list_sessions() const;
    ApiResponse get_session(const std::string& id);
    ApiResponse next(const std::string& id);
    ApiResponse score(const std::string& id, const json& body);
    ApiResponse finish(const std::string& id);
    ApiResponse report(const std::string& id);

    ApiResponse create_checklist(const json& body);
    ApiResponse get_checklist(const std::string& id);
    ApiResponse rate_checklist(const std::string& id, const json& body);
    ApiResponse set_checklist_mode(const std::string& id, const json& body);
    ApiResponse score_checklist(const std::string& id);

    ApiResponse tags() const;

    /// Registers every route, including the bearer-token check when configured.
    void install(httplib::Server& server);

private:
    struct SessionEntry;
    struct ChecklistEntry;

    std::shared_ptr<SessionEntry> session_entry(const std::string& id);
    std::shared_ptr<ChecklistEntry> checklist_entry(const std::string& id);
    std::string new_id(const char* prefix);
    json session_view(const ExamSession& s) const;

    ServiceConfig config_;
    mutable std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
    std::map<std::string, std::shared_ptr<ChecklistEntry>> checklists_;
    std::uint64_t counter_ = 0;
};

/// Maps an Error kind to the HTTP status the API reports for it.
int http_status(ErrorKind kind);

}  // namespace agealign
