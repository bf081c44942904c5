#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "stereorecon/study.hpp"

namespace stereorecon {

struct StudyServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  ///< 0 picks a free port
    /// Served at `/` when set (e.g. a built browser frontend).
    std::optional<std::filesystem::path> static_dir;
};

/// JSON-over-HTTP front of a StudyService.
///
///   POST /studies                          StudyConfig             -> 201 {study_id, question_count}
///   GET  /studies/{id}                                             -> plan summary
///   POST /studies/{id}/sessions            {reader_id, group}      -> 201 {session_id, cursor, question_count}
///   GET  /sessions/{id}/next                                       -> question payload or {status: "complete"}
///   POST /sessions/{id}/responses          {question_id, choice}   -> {status: "accepted", cursor, completed}
///   GET  /sessions/{id}/images/{q}/{role}  role = left | A | B     -> image/png
///   GET  /studies/{id}/export.csv                                  -> comparison records
///   POST /studies/{id}/ratings             {reader_id, group, video_id, question, score}
///   GET  /studies/{id}/ratings.csv
///
/// Errors are {"error": kind, "message": text} with 400 (invalid), 404 (not found),
/// 409 (rejected or already complete).
class StudyServer {
public:
    StudyServer(StudyService& service, StudyServerOptions options = {});
    ~StudyServer();
    StudyServer(const StudyServer&) = delete;
    StudyServer& operator=(const StudyServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop() is called.
    void run();
    void stop();
    int port() const noexcept { return port_; }

private:
    void bind();

    struct Impl;
    std::unique_ptr<Impl> impl_;
    StudyServerOptions options_;
    int port_ = 0;
};

}  // namespace stereorecon
