#include "stereorecon/study_server.hpp"

#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>

#include "stereorecon/error.hpp"

namespace stereorecon {
namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, status, json{{"error", kind}, {"message", message}});
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const StudyError& e) {
            switch (e.kind()) {
                case StudyError::Kind::not_found: send_error(res, 404, "not_found", e.what()); break;
                case StudyError::Kind::rejected: send_error(res, 409, "rejected", e.what()); break;
                case StudyError::Kind::completed: send_error(res, 409, "complete", e.what()); break;
                case StudyError::Kind::invalid: send_error(res, 400, "invalid", e.what()); break;
            }
        } catch (const json::exception& e) {
            send_error(res, 400, "invalid", std::string("malformed request body: ") + e.what());
        } catch (const ConfigError& e) {
            send_error(res, 400, "invalid", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto body = json::parse(req.body);
    if (!body.is_object()) throw StudyError(StudyError::Kind::invalid, "request body must be a JSON object");
    return body;
}

json session_json(const StudySession& s, std::size_t total) {
    return json{{"session_id", s.session_id}, {"study_id", s.study_id},         {"reader_id", s.reader_id},
                {"group", to_string(s.group)}, {"cursor", s.cursor},             {"completed", s.completed},
                {"question_count", total}};
}

}  // namespace

struct StudyServer::Impl {
    httplib::Server server;
    std::thread thread;
};

StudyServer::StudyServer(StudyService& service, StudyServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
    auto& srv = impl_->server;
    StudyService* svc = &service;

    srv.Post("/studies", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto config = parse_body(req).get<StudyConfig>();
        const auto id = svc->create_study(config);
        send_json(res, 201, json{{"study_id", id}, {"question_count", svc->plan(id).questions.size()}});
    }));

    srv.Get("/studies/:id", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto& plan = svc->plan(req.path_params.at("id"));
        send_json(res, 200,
                  json{{"study_id", req.path_params.at("id")},
                       {"models", plan.models},
                       {"examples", plan.example_ids},
                       {"target_id", plan.target_id},
                       {"question_count", plan.questions.size()}});
    }));

    srv.Post("/studies/:id/sessions", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto& study_id = req.path_params.at("id");
        ReaderGroup group;
        try {
            group = parse_reader_group(body.value("group", std::string("non_expert")));
        } catch (const ConfigError& e) {
            throw StudyError(StudyError::Kind::invalid, e.what());
        }
        const auto session = svc->create_session(study_id, body.at("reader_id").get<std::string>(), group);
        send_json(res, 201, session_json(session, svc->plan(study_id).questions.size()));
    }));

    srv.Get("/sessions/:id/next", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto p = svc->next_question(req.path_params.at("id"));
        json body{{"progress", {{"answered", p.index}, {"total", p.total}}}};
        if (p.completed) {
            body["status"] = "complete";
        } else {
            body["status"] = "question";
            body["question_id"] = p.question_id;
            body["images"] = {{"left", p.left_url}, {"A", p.image_a_url}, {"B", p.image_b_url}};
        }
        send_json(res, 200, body);
    }));

    srv.Post("/sessions/:id/responses", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto choice_text = body.at("choice").get<std::string>();
        if (choice_text != "A" && choice_text != "B")
            throw StudyError(StudyError::Kind::invalid, "choice must be \"A\" or \"B\"");
        const auto session = svc->submit_response(req.path_params.at("id"), body.at("question_id").get<std::string>(),
                                                  choice_text == "A" ? Choice::A : Choice::B);
        send_json(res, 200,
                  json{{"status", "accepted"}, {"cursor", session.cursor}, {"completed", session.completed}});
    }));

    srv.Get("/sessions/:id/images/:q/:role", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto& role_text = req.path_params.at("role");
        ImageRole role;
        if (role_text == "left")
            role = ImageRole::left;
        else if (role_text == "A")
            role = ImageRole::A;
        else if (role_text == "B")
            role = ImageRole::B;
        else
            throw StudyError(StudyError::Kind::not_found, "unknown image role '" + role_text + "'");
        std::size_t index = 0;
        try {
            index = std::stoul(req.path_params.at("q"));
        } catch (const std::exception&) {
            throw StudyError(StudyError::Kind::not_found, "bad question index");
        }
        const auto path = svc->image_path(req.path_params.at("id"), index, role);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw StudyError(StudyError::Kind::not_found, "image unavailable");
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        res.set_header("Cache-Control", "no-store");
        res.set_content(std::move(bytes), "image/png");
    }));

    srv.Get("/studies/:id/export.csv", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        res.set_content(svc->export_csv(req.path_params.at("id")), "text/csv");
    }));

    srv.Post("/studies/:id/ratings", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        RatingRecord r;
        r.reader_id = body.at("reader_id").get<std::string>();
        try {
            r.group = parse_reader_group(body.value("group", std::string("non_expert")));
        } catch (const ConfigError& e) {
            throw StudyError(StudyError::Kind::invalid, e.what());
        }
        r.video_id = body.at("video_id").get<std::string>();
        r.question = body.at("question").get<std::string>();
        r.score = body.at("score").get<int>();
        svc->add_rating(req.path_params.at("id"), r);
        send_json(res, 201, json{{"status", "recorded"}});
    }));

    srv.Get("/studies/:id/ratings.csv", guarded([svc](const httplib::Request& req, httplib::Response& res) {
        res.set_content(svc->export_ratings_csv(req.path_params.at("id")), "text/csv");
    }));

    if (options_.static_dir) srv.set_mount_point("/", options_.static_dir->string());
}

StudyServer::~StudyServer() { stop(); }

void StudyServer::bind() {
    auto& srv = impl_->server;
    if (options_.port == 0)
        port_ = srv.bind_to_any_port(options_.host);
    else if (srv.bind_to_port(options_.host, options_.port))
        port_ = options_.port;
    else
        port_ = -1;
    if (port_ < 0) throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
}

int StudyServer::start() {
    bind();
    auto& srv = impl_->server;
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return port_;
}

void StudyServer::run() {
    bind();
    impl_->server.listen_after_bind();
}

void StudyServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace stereorecon
