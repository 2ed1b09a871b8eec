#include <doctest.h>

#include <barrier>
#include <thread>

#include "agealign/io.hpp"
#include "agealign/service.hpp"
#include "check.hpp"
#include "fixtures.hpp"

#include <httplib.h>

using namespace agealign;

namespace {

struct Harness {
    fixture::TempDir dir{"svc"};
    std::vector<Question> qs = fixture::wc_questions(6);
    std::unique_ptr<ClinicianService> service;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit Harness(std::optional<std::string> token = std::nullopt) {
        ServiceConfig cfg;
        cfg.data_dir = dir.path;
        cfg.lm = fixture::scripted(qs, std::vector<int>(qs.size(), 1));
        cfg.norms = json::parse(R"({"WC": {"max_raw": 3, "bands": [
            {"min": 0, "max": 1, "age": "< 5"}, {"min": 2, "max": 2, "age": "7:5"}, {"min": 3, "max": 3, "age": "9:0"}]}})")
                        .get<NormTable>();
        cfg.token = std::move(token);
        service = std::make_unique<ClinicianService>(cfg);
        service->install(server);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Harness() {
        server.stop();
        thread.join();
    }
    httplib::Client client(const std::string& token = "") const {
        httplib::Client c("127.0.0.1", port);
        if (!token.empty()) c.set_bearer_token_auth(token);
        return c;
    }
    json questions(std::size_t n) const {
        json j = json::array();
        for (std::size_t i = 0; i < n; ++i) j.push_back(qs[i]);
        return j;
    }
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

httplib::Result post(httplib::Client& c, const std::string& path, const json& body) {
    return c.Post(path, body.dump(), "application/json");
}

}  // namespace

TEST_CASE("happy path over three questions") {
    Harness h;
    auto c = h.client();
    auto r = post(c, "/sessions", {{"id", "kid1"}, {"questions", h.questions(3)}, {"ceiling_k", 4}});
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(body_of(r).at("status") == "active");

    for (int i = 0; i < 3; ++i) {
        r = c.Get("/sessions/kid1/next");
        REQUIRE(r->status == 200);
        const auto b = body_of(r);
        CHECK(b.at("done") == false);
        const auto qid = b.at("item").at("question_id").get<std::string>();
        CHECK(qid == "q" + std::to_string(i));
        CHECK(b.at("item").at("prompt").get<std::string>().find("Carefully consider") == 0);
        r = post(c, "/sessions/kid1/score", {{"question_id", qid}, {"h", 1}, {"note", "fine"}, {"tag", "category"}});
        REQUIRE(r->status == 200);
    }
    r = c.Get("/sessions/kid1/next");
    CHECK(body_of(r).at("done") == true);
    r = c.Get("/sessions/kid1/report");
    REQUIRE(r->status == 200);
    const auto rep = body_of(r);
    CHECK(rep.at("status") == "completed");
    CHECK(rep.at("raw_score") == 3);
    CHECK(rep.at("observations").size() == 3);
    CHECK(rep.at("age").at("label") == "9:0");

    r = c.Get("/sessions");
    CHECK(body_of(r).at("sessions") == json::array({"kid1"}));
    r = c.Get("/tags");
    CHECK(body_of(r).at("tags").size() == default_observation_tags().size());
}

TEST_CASE("error statuses") {
    Harness h;
    auto c = h.client();
    CHECK(c.Get("/sessions/nobody")->status == 404);
    CHECK(c.Get("/sessions/nobody/next")->status == 404);
    CHECK(post(c, "/sessions/nobody/score", {{"question_id", "q0"}, {"h", 1}})->status == 404);
    CHECK(c.Post("/sessions", "{not json", "application/json")->status == 422);
    CHECK(post(c, "/sessions", {{"questions", json::array()}})->status == 422);
    CHECK(post(c, "/sessions", {{"questions", h.questions(2)}, {"id", "../etc"}})->status == 422);

    REQUIRE(post(c, "/sessions", {{"id", "a"}, {"questions", h.questions(6)}, {"ceiling_k", 2}})->status == 201);
    CHECK(post(c, "/sessions", {{"id", "a"}, {"questions", h.questions(6)}})->status == 409);
    // Scoring before presentation is out of order.
    CHECK(post(c, "/sessions/a/score", {{"question_id", "q0"}, {"h", 1}})->status == 409);
    c.Get("/sessions/a/next");
    CHECK(post(c, "/sessions/a/score", {{"question_id", "q0"}, {"h", 5}})->status == 422);
    CHECK(post(c, "/sessions/a/score", {{"question_id", "q0"}, {"h", "one"}})->status == 422);
    CHECK(post(c, "/sessions/a/score", {{"question_id", "q0"}, {"h", 0}, {"tag", "nonsense"}})->status == 422);
    CHECK(post(c, "/sessions/a/score", {{"question_id", "q0"}, {"h", 0}})->status == 200);
    c.Get("/sessions/a/next");
    const auto r = post(c, "/sessions/a/score", {{"question_id", "q1"}, {"h", 0}});
    CHECK(body_of(r).at("status") == "ceiling_stopped");
    CHECK(post(c, "/sessions/a/score", {{"question_id", "q2"}, {"h", 1}})->status == 409);
    CHECK(body_of(c.Get("/sessions/a/next")).at("done") == true);
}

TEST_CASE("ceiling warning is exposed one error before the stop") {
    Harness h;
    auto c = h.client();
    post(c, "/sessions", {{"id", "w"}, {"questions", h.questions(6)}, {"ceiling_k", 2}});
    c.Get("/sessions/w/next");
    const auto b = body_of(post(c, "/sessions/w/score", {{"question_id", "q0"}, {"h", 0}}));
    CHECK(b.at("ceiling_warning") == true);
    CHECK(b.at("consecutive_errors") == 1);
}

TEST_CASE("racing duplicate scores: exactly one is accepted") {
    Harness h;
    for (int round = 0; round < 20; ++round) {
        const std::string id = "race" + std::to_string(round);
        auto c = h.client();
        REQUIRE(post(c, "/sessions", {{"id", id}, {"questions", h.questions(3)}})->status == 201);
        c.Get("/sessions/" + id + "/next");
        std::barrier sync(2);
        int statuses[2] = {0, 0};
        auto racer = [&](int k) {
            auto cc = h.client();
            sync.arrive_and_wait();
            statuses[k] = post(cc, "/sessions/" + id + "/score", {{"question_id", "q0"}, {"h", 1}})->status;
        };
        std::thread a(racer, 0), b(racer, 1);
        a.join();
        b.join();
        CHECK(std::min(statuses[0], statuses[1]) == 200);
        CHECK(std::max(statuses[0], statuses[1]) == 409);
        CHECK(body_of(c.Get("/sessions/" + id)).at("raw_score") == 1);
    }
}

TEST_CASE("a failed write leaves the session file and state intact") {
    Harness h;
    auto c = h.client();
    post(c, "/sessions", {{"id", "crash"}, {"questions", h.questions(3)}});
    c.Get("/sessions/crash/next");
    const auto file = h.dir.path / "sessions" / "crash.json";
    const auto before = read_text(file);

    set_write_hook([](const auto&, const auto&) { throw std::runtime_error("killed before rename"); });
    const auto r = post(c, "/sessions/crash/score", {{"question_id", "q0"}, {"h", 1}});
    set_write_hook({});
    CHECK(r->status == 500);
    CHECK(read_text(file) == before);
    CHECK_NOTHROW(json::parse(before).get<ExamSession>());
    CHECK(body_of(c.Get("/sessions/crash")).at("raw_score") == 0);

    // The retry goes through, and a fresh service reads the same file back.
    CHECK(post(c, "/sessions/crash/score", {{"question_id", "q0"}, {"h", 1}})->status == 200);
    ServiceConfig cfg;
    cfg.data_dir = h.dir.path;
    cfg.lm = std::make_shared<StubLanguageModel>();
    ClinicianService reopened(cfg);
    const auto view = reopened.get_session("crash");
    CHECK(view.status == 200);
    CHECK(view.body.at("raw_score") == 1);
    CHECK(view.body.at("cursor") == 1);
}

TEST_CASE("bearer token") {
    Harness h("s3cret");
    auto anon = h.client();
    CHECK(anon.Get("/sessions")->status == 401);
    auto wrong = h.client("nope");
    CHECK(wrong.Get("/sessions")->status == 401);
    auto good = h.client("s3cret");
    CHECK(good.Get("/sessions")->status == 200);
}

TEST_CASE("checklist endpoints") {
    Harness h;
    auto c = h.client();
    json items = json::array();
    for (int i = 0; i < 32; ++i) items.push_back({{"id", "i" + std::to_string(i)}, {"applicable", i < 15}});
    REQUIRE(post(c, "/checklists", {{"id", "pp"}, {"items", items}})->status == 201);
    CHECK(c.Get("/checklists/pp/score")->status == 422);
    for (int i = 0; i < 15; ++i)
        REQUIRE(post(c, "/checklists/pp/rate", {{"item_id", "i" + std::to_string(i)}, {"rating", i < 7}})->status ==
                200);
    CHECK(post(c, "/checklists/pp/rate", {{"item_id", "i20"}, {"rating", 1}})->status == 409);
    auto s = body_of(c.Get("/checklists/pp/score"));
    CHECK(s.at("percent").get<double>() == doctest::Approx(46.6667).epsilon(1e-4));
    CHECK(post(c, "/checklists/pp/mode", {{"mode", "penalize"}})->status == 200);
    s = body_of(c.Get("/checklists/pp/score"));
    CHECK(s.at("denominator") == 32);
    CHECK(c.Get("/checklists/zz")->status == 404);
}

TEST_CASE("status mapping") {
    CHECK(http_status(ErrorKind::NotFound) == 404);
    CHECK(http_status(ErrorKind::Sequencing) == 409);
    CHECK(http_status(ErrorKind::State) == 409);
    CHECK(http_status(ErrorKind::InvalidScore) == 422);
    CHECK(http_status(ErrorKind::Incomplete) == 422);
    CHECK(http_status(ErrorKind::RateLimit) == 502);
}
