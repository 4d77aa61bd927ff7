#include <gtest/gtest.h>

#include "htapx/service.hpp"
#include "support.hpp"

#include "httplib.h"

using namespace htapx;
using nlohmann::json;
using testsupport::error_code_of;

namespace {

json example_body() {
    return json::parse(read_file(testsupport::source_path("fixtures/example1.json")));
}

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        RouterModel model = testsupport::reference_model();
        save_model(model, dir.file("router.bin"));
        KnowledgeBase kb = testsupport::seed_kb(model);
        kb.persist(dir.file("kb.db"));
        config.port = 0;
        config.model_path = dir.file("router.bin");
        config.kb_path = dir.file("kb.db");
        config.llm = LlmConfig::mock();
        config.parallelism = 4;
        service = std::make_unique<Service>(config, std::move(model), std::move(kb));
    }

    testsupport::TempDir dir;
    ServiceConfig config;
    std::unique_ptr<Service> service;
};

}  // namespace

TEST_F(ServiceTest, Health) {
    auto r = service->health();
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("status"), "ok");
    EXPECT_EQ(r.body.at("kb_size"), 20);
    EXPECT_EQ(r.body.at("model_version"), testsupport::reference_model().fingerprint());
}

TEST_F(ServiceTest, ExplainReturnsResultId) {
    auto r = service->explain(example_body());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body.at("status"), "EXPLAINED");
    EXPECT_EQ(r.body.at("retrieved").size(), 2u);
    EXPECT_TRUE(r.body.at("timings").contains("encode_ms"));
    EXPECT_FALSE(r.body.at("result_id").get<std::string>().empty());
    EXPECT_EQ(service->cached_results(), 1u);

    json body = example_body();
    body["k"] = 4;
    EXPECT_EQ(service->explain(body).body.at("retrieved").size(), 4u);
    body["k"] = 0;
    EXPECT_EQ(service->explain(body).status, 400);
}

TEST_F(ServiceTest, MalformedPairIs400) {
    auto r = service->explain(json{{"plan_pair", {{"tp_plan", 3}}}});
    EXPECT_EQ(r.status, 400);
    EXPECT_TRUE(r.body.at("error").contains("code"));
    EXPECT_EQ(service->explain(json::object()).body.at("error").at("code"), "E_SCHEMA");
}

TEST_F(ServiceTest, ReviewLifecycle) {
    std::string id = service->explain(example_body()).body.at("result_id");
    auto missing = service->review(json{{"result_id", "r999"}, {"verdict", "CORRECT"}});
    EXPECT_EQ(missing.status, 404);
    auto bad = service->review(json{{"result_id", id}, {"verdict", "INCORRECT"}});
    EXPECT_EQ(bad.status, 400);

    auto ok = service->review(json{{"result_id", id},
                                   {"verdict", "INCORRECT"},
                                   {"corrected_text", "AP is faster: hash joins replace repeated scans."},
                                   {"reviewer", "expert"}});
    ASSERT_EQ(ok.status, 200) << ok.body.dump();
    EXPECT_EQ(ok.body.at("kb_size"), 21);
    EXPECT_EQ(ok.body.at("provenance"), "EXPERT_CORRECTION");
    EXPECT_EQ(service->review(json{{"result_id", id}, {"verdict", "CORRECT"}}).status, 409);

    // The write reached disk.
    EXPECT_EQ(KnowledgeBase::load(config.kb_path).size(), 21u);

    auto again = service->explain(example_body());
    EXPECT_EQ(again.body.at("retrieved")[0].at("id"), ok.body.at("entry_id"));
}

TEST_F(ServiceTest, Followup) {
    std::string id = service->explain(example_body()).body.at("result_id");
    auto r = service->followup(json{{"result_id", id}, {"question", "why not the c_phone index?"}});
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body.at("transcript").size(), 5u);
    r = service->followup(json{{"result_id", id}, {"question", "and a bigger nation?"}});
    EXPECT_EQ(r.body.at("transcript").size(), 7u);
    EXPECT_EQ(service->followup(json{{"result_id", "nope"}, {"question", "?"}}).status, 404);
    EXPECT_EQ(service->followup(json{{"result_id", id}}).status, 400);
}

TEST_F(ServiceTest, ResultsExpire) {
    auto now = std::chrono::system_clock::now();
    service->set_clock([&now] { return now; });
    std::string id = service->explain(example_body()).body.at("result_id");
    now += std::chrono::hours(23);
    EXPECT_EQ(service->followup(json{{"result_id", id}, {"question", "why?"}}).status, 200);
    now += std::chrono::hours(2);
    EXPECT_EQ(service->review(json{{"result_id", id}, {"verdict", "CORRECT"}}).status, 404);
    EXPECT_EQ(service->cached_results(), 0u);
}

TEST_F(ServiceTest, KnowledgeListingAndInsert) {
    auto page = service->list_kb(5, 10);
    EXPECT_EQ(page.body.at("total"), 20);
    ASSERT_EQ(page.body.at("entries").size(), 10u);
    EXPECT_EQ(page.body.at("entries")[0].at("id"), 6);

    json entry = page.body.at("entries")[0];
    entry.erase("id");
    entry.erase("key");
    entry.erase("provenance");
    entry["explanation"] = "TP is faster thanks to the primary key index.";
    auto r = service->insert_kb(entry);
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body.at("id"), 21);
    EXPECT_EQ(service->kb().get(21)->provenance, Provenance::ExpertSeed);
    EXPECT_EQ(service->kb().get(21)->key, service->kb().get(6)->key);
    EXPECT_EQ(KnowledgeBase::load(config.kb_path).size(), 21u);
}

TEST_F(ServiceTest, Retrieve) {
    json body = example_body();
    auto r = service->retrieve(body, 3);
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body.at("k"), 3);
    ASSERT_EQ(r.body.at("hits").size(), 3u);
    auto want = service->kb().top_k(embed_pair(testsupport::reference_model(), pair_from_json(body.at("plan_pair"))), 3);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(r.body.at("hits")[i].at("id"), want[i].entry->id);
        EXPECT_EQ(r.body.at("hits")[i].at("similarity").get<double>(), want[i].similarity);
    }
    EXPECT_EQ(service->retrieve(body, std::nullopt).body.at("hits").size(), 2u);
}

TEST_F(ServiceTest, OverHttp) {
    service->start();
    httplib::Client cli("127.0.0.1", service->port());
    auto health = cli.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(json::parse(health->body).at("kb_size"), 20);

    auto exp = cli.Post("/api/explain", example_body().dump(), "application/json");
    ASSERT_TRUE(exp);
    EXPECT_EQ(exp->status, 200);
    std::string id = json::parse(exp->body).at("result_id");

    auto junk = cli.Post("/api/explain", "{not json", "application/json");
    ASSERT_TRUE(junk);
    EXPECT_EQ(junk->status, 400);

    auto kb = cli.Get("/api/kb?offset=18&limit=5");
    ASSERT_TRUE(kb);
    EXPECT_EQ(json::parse(kb->body).at("entries").size(), 2u);
    EXPECT_EQ(cli.Get("/api/kb?offset=-1")->status, 400);

    auto ret = cli.Post("/api/retrieve?k=5", example_body().dump(), "application/json");
    ASSERT_TRUE(ret);
    EXPECT_EQ(json::parse(ret->body).at("hits").size(), 5u);

    auto rev = cli.Post("/api/review", json{{"result_id", id}, {"verdict", "CORRECT"}}.dump(), "application/json");
    ASSERT_TRUE(rev);
    EXPECT_EQ(rev->status, 200);
    auto twice = cli.Post("/api/review", json{{"result_id", id}, {"verdict", "CORRECT"}}.dump(), "application/json");
    EXPECT_EQ(twice->status, 409);

    auto opts = cli.Options("/api/explain");
    ASSERT_TRUE(opts);
    EXPECT_EQ(opts->get_header_value("Access-Control-Allow-Origin"), "*");

    service->stop();
    EXPECT_EQ(KnowledgeBase::load(config.kb_path).size(), 21u);
}

TEST_F(ServiceTest, PortInUse) {
    service->start();
    ServiceConfig taken = config;
    taken.port = service->port();
    Service other(taken, testsupport::reference_model(), KnowledgeBase{});
    EXPECT_EQ(error_code_of([&] { other.start(); }), "E_BIND");
    service->stop();
}

TEST_F(ServiceTest, LoadFailures) {
    ServiceConfig c = config;
    c.model_path = dir.file("missing.bin");
    EXPECT_EQ(error_code_of([&] { Service::load(c); }), "E_LOAD");
    c = config;
    write_file_atomic(dir.file("broken.db"), "garbage");
    c.kb_path = dir.file("broken.db");
    EXPECT_EQ(error_code_of([&] { Service::load(c); }), "E_LOAD");
    c = config;
    c.default_k = 0;
    EXPECT_EQ(error_code_of([&] { Service::load(c); }), "E_PARAM");
    auto ok = Service::load(config);
    EXPECT_EQ(ok->kb().size(), 20u);
}
