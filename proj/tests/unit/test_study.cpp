#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/ranking.hpp"
#include "stereorecon/study.hpp"

namespace sr = stereorecon;

namespace {

std::vector<std::string> ids(const std::string& prefix, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

std::multiset<std::tuple<std::string, std::string, std::string>> as_multiset(const sr::StudyPlan& plan) {
    std::multiset<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& q : plan.questions) out.emplace(std::min(q.item_a, q.item_b), std::max(q.item_a, q.item_b), q.example_id);
    return out;
}

sr::StudyConfig small_config() {
    sr::StudyConfig c;
    c.models = {"m0", "m1", "m2"};
    c.examples = {"e0", "e1"};
    c.seed = 4;
    return c;
}

sr::StudyError::Kind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const sr::StudyError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no StudyError";
    return sr::StudyError::Kind::invalid;
}

std::string shown(const sr::StudyPlan& plan, const std::string& session, std::size_t index, sr::Choice side) {
    const auto& q = plan.questions[index];
    const bool swap = sr::StudyService::swapped(session, index);
    const bool first = (side == sr::Choice::A) != swap;
    return first ? q.item_a : q.item_b;
}

}  // namespace

TEST(StudyPlan, QuestionCounts) {
    EXPECT_EQ(sr::build_study_plan(ids("m", 2), ids("e", 3), 0).questions.size(), 3u + 2u);
    EXPECT_EQ(sr::build_study_plan(ids("m", 8), ids("e", 3), 0).questions.size(), 28u * 3u + 8u);
    const auto plan = sr::build_study_plan(ids("m", 4), ids("e", 3), 1);
    std::map<std::string, int> against_target;
    for (const auto& q : plan.questions) {
        EXPECT_NE(q.item_a, q.item_b);
        if (q.item_b == "target") ++against_target[q.item_a];
        if (q.item_a == "target") ++against_target[q.item_b];
    }
    for (const auto& m : ids("m", 4)) EXPECT_EQ(against_target[m], 1) << m;
}

TEST(StudyPlan, SeedChangesOrderOnly) {
    const auto a = sr::build_study_plan(ids("m", 5), ids("e", 4), 1);
    const auto b = sr::build_study_plan(ids("m", 5), ids("e", 4), 2);
    EXPECT_EQ(as_multiset(a), as_multiset(b));
    EXPECT_NE(a.questions, b.questions);
    EXPECT_EQ(a.questions, sr::build_study_plan(ids("m", 5), ids("e", 4), 1).questions);
}

TEST(StudyPlan, RejectsBadInput) {
    EXPECT_THROW(sr::build_study_plan({"m0", "m0"}, {"e"}, 0), sr::ConfigError);
    EXPECT_THROW(sr::build_study_plan({"m0"}, {"e"}, 0), sr::ConfigError);
    EXPECT_THROW(sr::build_study_plan({"m0", "m1"}, {}, 0), sr::ConfigError);
    EXPECT_THROW(sr::build_study_plan({"m0", "target"}, {"e"}, 0), sr::ConfigError);
    EXPECT_THROW(sr::build_study_plan({"m0", "m/1"}, {"e"}, 0), sr::ConfigError);
}

TEST(StudyConfig, JsonRoundTrip) {
    auto c = small_config();
    c.image_root = "/tmp/images";
    const nlohmann::json j = c;
    const auto back = j.get<sr::StudyConfig>();
    EXPECT_EQ(back.models, c.models);
    EXPECT_EQ(back.examples, c.examples);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.image_root, c.image_root);
}

TEST(StudyService, SessionFlowAndRejections) {
    oracle::TempDir dir("study");
    sr::StudyService service(dir.path());
    const auto study = service.create_study(small_config());
    const auto total = service.plan(study).questions.size();
    EXPECT_EQ(total, 3u * 2u + 3u);
    auto session = service.create_session(study, "reader1", sr::ReaderGroup::expert);
    EXPECT_EQ(session.cursor, 0u);

    auto next = service.next_question(session.session_id);
    EXPECT_EQ(next.question_id, "q0");
    EXPECT_EQ(next.total, total);
    EXPECT_EQ(next.image_a_url, "/sessions/" + session.session_id + "/images/0/A");

    EXPECT_EQ(kind_of([&] { service.submit_response(session.session_id, "q1", sr::Choice::A); }),
              sr::StudyError::Kind::rejected);
    service.submit_response(session.session_id, "q0", sr::Choice::A);
    EXPECT_EQ(kind_of([&] { service.submit_response(session.session_id, "q0", sr::Choice::A); }),
              sr::StudyError::Kind::rejected);
    EXPECT_EQ(service.responses(study).size(), 1u);

    // Reconnecting returns the same session at the same position.
    const auto again = service.create_session(study, "reader1", sr::ReaderGroup::expert);
    EXPECT_EQ(again.session_id, session.session_id);
    EXPECT_EQ(again.cursor, 1u);
    EXPECT_EQ(kind_of([&] { service.create_session(study, "reader1", sr::ReaderGroup::non_expert); }),
              sr::StudyError::Kind::rejected);

    for (std::size_t i = 1; i < total; ++i) service.submit_response(session.session_id, "q" + std::to_string(i), sr::Choice::B);
    EXPECT_TRUE(service.session(session.session_id).completed);
    EXPECT_TRUE(service.next_question(session.session_id).completed);
    EXPECT_EQ(kind_of([&] { service.submit_response(session.session_id, "q0", sr::Choice::A); }),
              sr::StudyError::Kind::completed);
    EXPECT_EQ(service.responses(study).size(), total);

    EXPECT_EQ(kind_of([&] { service.next_question("nope"); }), sr::StudyError::Kind::not_found);
    EXPECT_EQ(kind_of([&] { service.create_session("nope", "r", sr::ReaderGroup::expert); }),
              sr::StudyError::Kind::not_found);
    EXPECT_EQ(kind_of([&] { service.create_session(study, "bad,id", sr::ReaderGroup::expert); }),
              sr::StudyError::Kind::invalid);
}

TEST(StudyService, RecordsShowDisplayedSides) {
    oracle::TempDir dir("study");
    sr::StudyService service(dir.path());
    const auto study = service.create_study(small_config());
    const auto& plan = service.plan(study);
    const auto s = service.create_session(study, "r", sr::ReaderGroup::expert);
    for (std::size_t i = 0; i < plan.questions.size(); ++i)
        service.submit_response(s.session_id, plan.question_id(i), sr::Choice::A);
    const auto records = service.responses(study);
    int swaps = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(records[i].winner(), shown(plan, s.session_id, i, sr::Choice::A));
        EXPECT_EQ(records[i].question_id, plan.question_id(i));
        EXPECT_EQ(records[i].group, sr::ReaderGroup::expert);
        swaps += sr::StudyService::swapped(s.session_id, i);
    }
    EXPECT_GT(swaps, 0);
    EXPECT_LT(swaps, static_cast<int>(records.size()));
}

TEST(StudyService, ConsistentPreferenceRanksFirst) {
    oracle::TempDir dir("study");
    sr::StudyService service(dir.path());
    const auto study = service.create_study(small_config());
    const auto& plan = service.plan(study);
    for (int r = 0; r < 4; ++r) {
        const auto s = service.create_session(study, "r" + std::to_string(r), sr::ReaderGroup::non_expert);
        for (std::size_t i = 0; i < plan.questions.size(); ++i) {
            const bool m1_on_b = shown(plan, s.session_id, i, sr::Choice::B) == "m1";
            service.submit_response(s.session_id, plan.question_id(i), m1_on_b ? sr::Choice::B : sr::Choice::A);
        }
    }
    const auto fit = sr::fit_bradley_terry(service.responses(study), "target");
    const auto rows = sr::ranking_table(fit, service.responses(study));
    EXPECT_EQ(rows.front().model_id, "m1");
    EXPECT_EQ(sr::majority_vote_win_rate(service.responses(study), "m1").percentage, 100.0);
}

TEST(StudyService, PersistsAcrossRestartsAndToleratesTornTail) {
    oracle::TempDir dir("study");
    std::string study;
    std::string session;
    std::string csv;
    {
        sr::StudyService service(dir.path());
        study = service.create_study(small_config());
        session = service.create_session(study, "reader", sr::ReaderGroup::expert).session_id;
        service.submit_response(session, "q0", sr::Choice::B);
        service.submit_response(session, "q1", sr::Choice::A);
        service.add_rating(study, {"reader", sr::ReaderGroup::expert, "video1", "depth", 4, ""});
        csv = service.export_csv(study);
    }
    {
        std::ofstream log(dir.path() / "events.jsonl", std::ios::app);
        log << R"({"type":"response","session_id":")" << session << R"(","ind)";
    }
    sr::StudyService restarted(dir.path());
    EXPECT_EQ(restarted.export_csv(study), csv);
    EXPECT_EQ(restarted.session(session).cursor, 2u);
    EXPECT_EQ(restarted.ratings(study).size(), 1u);
    EXPECT_EQ(restarted.study_ids(), std::vector<std::string>{study});
    restarted.submit_response(session, "q2", sr::Choice::A);
    EXPECT_EQ(restarted.responses(study).size(), 3u);
}

TEST(StudyService, CorruptMiddleLineIsAnError) {
    oracle::TempDir dir("study");
    {
        sr::StudyService service(dir.path());
        service.create_study(small_config());
    }
    {
        std::ofstream log(dir.path() / "events.jsonl", std::ios::app);
        log << "garbage\n" << R"({"type":"study"})" << "\n";
    }
    EXPECT_THROW(sr::StudyService{dir.path()}, sr::DataError);
}

TEST(StudyService, RatingsAndEmptyExports) {
    oracle::TempDir dir("study");
    sr::StudyService service(dir.path());
    const auto study = service.create_study(small_config());
    EXPECT_EQ(service.export_csv(study), std::string(sr::kRecordCsvHeader) + "\n");
    EXPECT_EQ(service.export_ratings_csv(study), "reader_id,group,video_id,question,score,timestamp\n");
    EXPECT_EQ(kind_of([&] { service.add_rating(study, {"r", sr::ReaderGroup::expert, "v", "q", 6, ""}); }),
              sr::StudyError::Kind::invalid);
    service.add_rating(study, {"r", sr::ReaderGroup::expert, "v", "comfort", 5, ""});
    const auto csv = service.export_ratings_csv(study);
    EXPECT_NE(csv.find("r,expert,v,comfort,5,"), std::string::npos);
    EXPECT_EQ(kind_of([&] { service.add_rating("nope", {"r", sr::ReaderGroup::expert, "v", "q", 3, ""}); }),
              sr::StudyError::Kind::not_found);
}

TEST(StudyService, ImagesResolveBlindedRoles) {
    oracle::TempDir dir("study");
    const auto root = dir.path() / "images";
    auto config = small_config();
    EXPECT_EQ(kind_of([&] {
                  auto c = config;
                  c.image_root = root;
                  sr::StudyService(dir.path() / "s0").create_study(c);
              }),
              sr::StudyError::Kind::invalid);
    for (const auto& e : config.examples) {
        std::filesystem::create_directories(root / e);
        for (const std::string name : {"left", "target", "m0", "m1", "m2"}) std::ofstream(root / e / (name + ".png")) << name;
    }
    config.image_root = root;
    sr::StudyService service(dir.path() / "s1");
    const auto study = service.create_study(config);
    const auto& plan = service.plan(study);
    const auto s = service.create_session(study, "r", sr::ReaderGroup::expert);
    for (std::size_t i = 0; i < plan.questions.size(); ++i) {
        const auto& q = plan.questions[i];
        EXPECT_EQ(service.image_path(s.session_id, i, sr::ImageRole::left), root / q.example_id / "left.png");
        EXPECT_EQ(service.image_path(s.session_id, i, sr::ImageRole::A).stem(), shown(plan, s.session_id, i, sr::Choice::A));
        EXPECT_EQ(service.image_path(s.session_id, i, sr::ImageRole::B).stem(), shown(plan, s.session_id, i, sr::Choice::B));
    }
    EXPECT_EQ(kind_of([&] { service.image_path(s.session_id, 999, sr::ImageRole::A); }), sr::StudyError::Kind::not_found);
}
