#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stereorecon/ranking.hpp"

namespace stereorecon {

struct PlanQuestion {
    std::string item_a;
    std::string item_b;
    std::string example_id;
    bool operator==(const PlanQuestion&) const = default;
};

/// Every model pair on every example, plus each model once against the target.
struct StudyPlan {
    std::vector<std::string> models;
    std::vector<std::string> example_ids;
    std::string target_id = "target";
    std::vector<PlanQuestion> questions;
    std::uint64_t shuffle_seed = 0;

    std::string question_id(std::size_t index) const { return "q" + std::to_string(index); }
};

/// C(n, 2) * e + n questions. Model k meets the target on example k mod e. Question order is a
/// seeded shuffle. Throws ConfigError for duplicate ids, n < 2 or e < 1.
StudyPlan build_study_plan(const std::vector<std::string>& model_ids, const std::vector<std::string>& example_ids,
                           std::uint64_t seed, const std::string& target_id = "target");

/// Body of `POST /studies`.
struct StudyConfig {
    std::vector<std::string> models;
    std::vector<std::string> examples;
    std::uint64_t seed = 0;
    std::string target_id = "target";
    /// Optional; images are read from `<image_root>/<example>/{left,<target_id>,<model>}.png`.
    std::optional<std::filesystem::path> image_root;
};

void to_json(nlohmann::json& j, const StudyConfig& c);
void from_json(const nlohmann::json& j, StudyConfig& c);

/// Reader position in a study. A and B are swapped per question from a hash of the session id.
struct StudySession {
    std::string session_id;
    std::string study_id;
    std::string reader_id;
    ReaderGroup group = ReaderGroup::simulated;
    std::size_t cursor = 0;
    bool completed = false;
};

enum class ImageRole { left, A, B };

struct QuestionPayload {
    bool completed = false;
    std::string question_id;
    std::size_t index = 0;
    std::size_t total = 0;
    std::string left_url;
    std::string image_a_url;
    std::string image_b_url;
};

struct RatingRecord {
    std::string reader_id;
    ReaderGroup group = ReaderGroup::simulated;
    std::string video_id;
    std::string question;
    int score = 0;  ///< 1 (worst) .. 5 (best)
    std::string timestamp;
};

/// Study state with a durable write-ahead event log. Every accepted mutation is appended and
/// fsync'ed before the call returns; the constructor replays an existing log.
class StudyService {
public:
    explicit StudyService(std::filesystem::path state_dir);

    std::string create_study(const StudyConfig& config);
    /// Returns the reader's existing session when one exists for this study.
    StudySession create_session(const std::string& study_id, const std::string& reader_id, ReaderGroup group);

    QuestionPayload next_question(const std::string& session_id) const;
    /// Accepts only the session's current question. Throws StudyError without changing state otherwise.
    StudySession submit_response(const std::string& session_id, const std::string& question_id, Choice choice);

    std::vector<ComparisonRecord> responses(const std::string& study_id) const;
    std::string export_csv(const std::string& study_id) const;

    void add_rating(const std::string& study_id, RatingRecord rating);
    std::vector<RatingRecord> ratings(const std::string& study_id) const;
    std::string export_ratings_csv(const std::string& study_id) const;

    /// File behind a blinded image URL. Throws StudyError(not_found) when unavailable.
    std::filesystem::path image_path(const std::string& session_id, std::size_t question_index, ImageRole role) const;

    const StudyPlan& plan(const std::string& study_id) const;
    StudySession session(const std::string& session_id) const;
    std::vector<std::string> study_ids() const;
    const std::filesystem::path& log_path() const noexcept { return log_path_; }

    /// Side assignment for one reader and question: true when the plan's item_a is shown as B.
    static bool swapped(const std::string& session_id, std::size_t question_index);

private:
    struct Study {
        StudyConfig config;
        StudyPlan plan;
        std::vector<ComparisonRecord> records;
        std::vector<RatingRecord> ratings;
        std::map<std::string, std::string> reader_sessions;
    };

    void replay();
    void append(const nlohmann::json& event);
    void apply(const nlohmann::json& event);
    const Study& study_locked(const std::string& study_id) const;
    Study& study_locked(const std::string& study_id);
    const StudySession& session_locked(const std::string& session_id) const;

    std::filesystem::path state_dir_;
    std::filesystem::path log_path_;
    mutable std::mutex mutex_;
    std::map<std::string, Study> studies_;
    std::map<std::string, StudySession> sessions_;
};

}  // namespace stereorecon
