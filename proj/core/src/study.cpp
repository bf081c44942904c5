#include "stereorecon/study.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "stereorecon/error.hpp"
#include "stereorecon/random.hpp"

namespace stereorecon {
namespace {

std::string random_token(std::size_t bytes) {
    static thread_local std::random_device device;
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (std::size_t i = 0; i < bytes; ++i) {
        const auto b = static_cast<unsigned>(device()) & 0xffU;
        out += hex[b >> 4];
        out += hex[b & 0xfU];
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void check_ids(const std::vector<std::string>& ids, const char* what) {
    std::set<std::string> seen;
    for (const auto& id : ids) {
        if (id.empty() || id.find_first_of(",\"\r\n/") != std::string::npos)
            throw ConfigError(std::string(what) + " id '" + id + "' is empty or contains a reserved character");
        if (!seen.insert(id).second) throw ConfigError(std::string("duplicate ") + what + " id '" + id + "'");
    }
}

StudyError not_found(const std::string& what) { return StudyError(StudyError::Kind::not_found, what); }

}  // namespace

StudyPlan build_study_plan(const std::vector<std::string>& model_ids, const std::vector<std::string>& example_ids,
                           std::uint64_t seed, const std::string& target_id) {
    check_ids(model_ids, "model");
    check_ids(example_ids, "example");
    check_ids({target_id}, "target");
    if (model_ids.size() < 2) throw ConfigError("a study needs at least two models");
    if (example_ids.empty()) throw ConfigError("a study needs at least one example");
    if (std::find(model_ids.begin(), model_ids.end(), target_id) != model_ids.end())
        throw ConfigError("model id '" + target_id + "' collides with the target id");

    StudyPlan plan;
    plan.models = model_ids;
    plan.example_ids = example_ids;
    plan.target_id = target_id;
    plan.shuffle_seed = seed;
    for (const auto& example : example_ids)
        for (std::size_t i = 0; i < model_ids.size(); ++i)
            for (std::size_t j = i + 1; j < model_ids.size(); ++j)
                plan.questions.push_back({model_ids[i], model_ids[j], example});
    for (std::size_t k = 0; k < model_ids.size(); ++k)
        plan.questions.push_back({model_ids[k], target_id, example_ids[k % example_ids.size()]});
    std::mt19937_64 rng(seed);
    portable_shuffle(std::span<PlanQuestion>(plan.questions), rng);
    return plan;
}

void to_json(nlohmann::json& j, const StudyConfig& c) {
    j = nlohmann::json{{"models", c.models}, {"examples", c.examples}, {"seed", c.seed}, {"target_id", c.target_id}};
    if (c.image_root) j["image_root"] = c.image_root->string();
}

void from_json(const nlohmann::json& j, StudyConfig& c) {
    c.models = j.at("models").get<std::vector<std::string>>();
    c.examples = j.at("examples").get<std::vector<std::string>>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.target_id = j.value("target_id", std::string("target"));
    if (j.contains("image_root") && !j["image_root"].is_null())
        c.image_root = std::filesystem::path(j["image_root"].get<std::string>());
    else
        c.image_root.reset();
}

StudyService::StudyService(std::filesystem::path state_dir)
    : state_dir_(std::move(state_dir)), log_path_(state_dir_ / "events.jsonl") {
    std::filesystem::create_directories(state_dir_);
    replay();
}

void StudyService::replay() {
    std::ifstream in(log_path_);
    if (!in) return;
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        nlohmann::json event;
        try {
            event = nlohmann::json::parse(lines[i]);
        } catch (const nlohmann::json::parse_error&) {
            // A torn final line was never acknowledged.
            if (i + 1 == lines.size()) break;
            throw DataError(log_path_.string() + ": corrupt event on line " + std::to_string(i + 1));
        }
        apply(event);
    }
}

void StudyService::append(const nlohmann::json& event) {
    const auto line = event.dump() + "\n";
    const int fd = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw Error("cannot open " + log_path_.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const std::string reason = std::strerror(errno);
            ::close(fd);
            throw Error("cannot append to " + log_path_.string() + ": " + reason);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const std::string reason = std::strerror(errno);
        ::close(fd);
        throw Error("fsync failed on " + log_path_.string() + ": " + reason);
    }
    ::close(fd);
}

void StudyService::apply(const nlohmann::json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "study") {
        Study study;
        study.config = event.at("config").get<StudyConfig>();
        study.plan = build_study_plan(study.config.models, study.config.examples, study.config.seed,
                                      study.config.target_id);
        studies_[event.at("study_id").get<std::string>()] = std::move(study);
    } else if (type == "session") {
        StudySession s;
        s.session_id = event.at("session_id").get<std::string>();
        s.study_id = event.at("study_id").get<std::string>();
        s.reader_id = event.at("reader_id").get<std::string>();
        s.group = parse_reader_group(event.at("group").get<std::string>());
        study_locked(s.study_id).reader_sessions[s.reader_id] = s.session_id;
        sessions_[s.session_id] = s;
    } else if (type == "response") {
        auto& s = sessions_.at(event.at("session_id").get<std::string>());
        auto& study = study_locked(s.study_id);
        const auto index = event.at("index").get<std::size_t>();
        const auto& q = study.plan.questions.at(index);
        const bool swap = swapped(s.session_id, index);
        ComparisonRecord r;
        r.question_id = study.plan.question_id(index);
        r.reader_id = s.reader_id;
        r.group = s.group;
        r.item_a = swap ? q.item_b : q.item_a;
        r.item_b = swap ? q.item_a : q.item_b;
        r.choice = event.at("choice").get<std::string>() == "A" ? Choice::A : Choice::B;
        r.timestamp = event.at("timestamp").get<std::string>();
        study.records.push_back(std::move(r));
        s.cursor = index + 1;
        s.completed = s.cursor >= study.plan.questions.size();
    } else if (type == "rating") {
        RatingRecord r;
        r.reader_id = event.at("reader_id").get<std::string>();
        r.group = parse_reader_group(event.at("group").get<std::string>());
        r.video_id = event.at("video_id").get<std::string>();
        r.question = event.at("question").get<std::string>();
        r.score = event.at("score").get<int>();
        r.timestamp = event.at("timestamp").get<std::string>();
        study_locked(event.at("study_id").get<std::string>()).ratings.push_back(std::move(r));
    } else {
        throw DataError("unknown study event type '" + type + "'");
    }
}

const StudyService::Study& StudyService::study_locked(const std::string& study_id) const {
    auto it = studies_.find(study_id);
    if (it == studies_.end()) throw not_found("unknown study '" + study_id + "'");
    return it->second;
}

StudyService::Study& StudyService::study_locked(const std::string& study_id) {
    auto it = studies_.find(study_id);
    if (it == studies_.end()) throw not_found("unknown study '" + study_id + "'");
    return it->second;
}

const StudySession& StudyService::session_locked(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw not_found("unknown session '" + session_id + "'");
    return it->second;
}

std::string StudyService::create_study(const StudyConfig& config) {
    StudyPlan plan;
    try {
        plan = build_study_plan(config.models, config.examples, config.seed, config.target_id);
    } catch (const ConfigError& e) {
        throw StudyError(StudyError::Kind::invalid, e.what());
    }
    if (config.image_root) {
        std::vector<std::string> missing;
        for (const auto& example : config.examples) {
            std::vector<std::string> names{"left", config.target_id};
            names.insert(names.end(), config.models.begin(), config.models.end());
            for (const auto& name : names) {
                const auto path = *config.image_root / example / (name + ".png");
                if (!std::filesystem::is_regular_file(path)) missing.push_back(path.string());
            }
        }
        if (!missing.empty()) {
            std::string msg = "missing study images:";
            for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
            if (missing.size() > 10) msg += " (+" + std::to_string(missing.size() - 10) + " more)";
            throw StudyError(StudyError::Kind::invalid, msg);
        }
    }
    std::lock_guard lock(mutex_);
    std::string id;
    do {
        id = "st" + random_token(6);
    } while (studies_.count(id));
    const nlohmann::json event{{"type", "study"}, {"study_id", id}, {"config", config}, {"timestamp", utc_timestamp()}};
    append(event);
    apply(event);
    return id;
}

StudySession StudyService::create_session(const std::string& study_id, const std::string& reader_id,
                                          ReaderGroup group) {
    if (reader_id.empty() || reader_id.find_first_of(",\"\r\n") != std::string::npos)
        throw StudyError(StudyError::Kind::invalid, "reader_id is empty or contains a reserved character");
    std::lock_guard lock(mutex_);
    const auto& study = study_locked(study_id);
    if (auto it = study.reader_sessions.find(reader_id); it != study.reader_sessions.end()) {
        const auto& existing = sessions_.at(it->second);
        if (existing.group != group)
            throw StudyError(StudyError::Kind::rejected,
                             "reader '" + reader_id + "' already joined as " + to_string(existing.group));
        return existing;
    }
    std::string id;
    do {
        id = random_token(16);
    } while (sessions_.count(id));
    const nlohmann::json event{{"type", "session"}, {"session_id", id},          {"study_id", study_id},
                               {"reader_id", reader_id}, {"group", to_string(group)}, {"timestamp", utc_timestamp()}};
    append(event);
    apply(event);
    return sessions_.at(id);
}

QuestionPayload StudyService::next_question(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const auto& s = session_locked(session_id);
    const auto& study = study_locked(s.study_id);
    QuestionPayload p;
    p.total = study.plan.questions.size();
    p.index = s.cursor;
    p.completed = s.completed;
    if (s.completed) return p;
    p.question_id = study.plan.question_id(s.cursor);
    const auto base = "/sessions/" + session_id + "/images/" + std::to_string(s.cursor) + "/";
    p.left_url = base + "left";
    p.image_a_url = base + "A";
    p.image_b_url = base + "B";
    return p;
}

StudySession StudyService::submit_response(const std::string& session_id, const std::string& question_id,
                                           Choice choice) {
    std::lock_guard lock(mutex_);
    const auto& s = session_locked(session_id);
    const auto& study = study_locked(s.study_id);
    if (s.completed) throw StudyError(StudyError::Kind::completed, "session already completed");
    const auto expected = study.plan.question_id(s.cursor);
    if (question_id != expected)
        throw StudyError(StudyError::Kind::rejected,
                         "question '" + question_id + "' is not the pending question '" + expected + "'");
    const nlohmann::json event{{"type", "response"},
                               {"session_id", session_id},
                               {"index", s.cursor},
                               {"choice", choice == Choice::A ? "A" : "B"},
                               {"timestamp", utc_timestamp()}};
    append(event);
    apply(event);
    return sessions_.at(session_id);
}

std::vector<ComparisonRecord> StudyService::responses(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    return study_locked(study_id).records;
}

std::string StudyService::export_csv(const std::string& study_id) const {
    std::ostringstream out;
    write_records_csv(out, responses(study_id));
    return out.str();
}

void StudyService::add_rating(const std::string& study_id, RatingRecord rating) {
    if (rating.score < 1 || rating.score > 5)
        throw StudyError(StudyError::Kind::invalid, "rating score must be between 1 and 5");
    for (const auto* field : {&rating.reader_id, &rating.video_id, &rating.question})
        if (field->empty() || field->find_first_of(",\"\r\n") != std::string::npos)
            throw StudyError(StudyError::Kind::invalid, "rating fields must be non-empty and free of separators");
    std::lock_guard lock(mutex_);
    study_locked(study_id);
    const nlohmann::json event{{"type", "rating"},         {"study_id", study_id},
                               {"reader_id", rating.reader_id}, {"group", to_string(rating.group)},
                               {"video_id", rating.video_id},   {"question", rating.question},
                               {"score", rating.score},         {"timestamp", utc_timestamp()}};
    append(event);
    apply(event);
}

std::vector<RatingRecord> StudyService::ratings(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    return study_locked(study_id).ratings;
}

std::string StudyService::export_ratings_csv(const std::string& study_id) const {
    std::ostringstream out;
    out << "reader_id,group,video_id,question,score,timestamp\n";
    for (const auto& r : ratings(study_id))
        out << r.reader_id << ',' << to_string(r.group) << ',' << r.video_id << ',' << r.question << ',' << r.score
            << ',' << r.timestamp << '\n';
    return out.str();
}

std::filesystem::path StudyService::image_path(const std::string& session_id, std::size_t question_index,
                                               ImageRole role) const {
    std::lock_guard lock(mutex_);
    const auto& s = session_locked(session_id);
    const auto& study = study_locked(s.study_id);
    if (!study.config.image_root) throw not_found("study has no image root");
    if (question_index >= study.plan.questions.size()) throw not_found("no such question");
    const auto& q = study.plan.questions[question_index];
    const bool swap = swapped(session_id, question_index);
    std::string name;
    switch (role) {
        case ImageRole::left: name = "left"; break;
        case ImageRole::A: name = swap ? q.item_b : q.item_a; break;
        case ImageRole::B: name = swap ? q.item_a : q.item_b; break;
    }
    return *study.config.image_root / q.example_id / (name + ".png");
}

const StudyPlan& StudyService::plan(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    return study_locked(study_id).plan;
}

StudySession StudyService::session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    return session_locked(session_id);
}

std::vector<std::string> StudyService::study_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, study] : studies_) ids.push_back(id);
    return ids;
}

bool StudyService::swapped(const std::string& session_id, std::size_t question_index) {
    return (mix_seed(fnv1a(session_id), question_index) & 1U) != 0;
}

}  // namespace stereorecon
