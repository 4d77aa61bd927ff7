#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"

#include "htapx/knowledge_base.hpp"
#include "htapx/llm.hpp"
#include "htapx/pipeline.hpp"
#include "htapx/router.hpp"

namespace httplib {
class Server;
}

namespace htapx {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::string model_path;
    std::string kb_path;
    std::string templates_dir;  // empty: built-in templates
    LlmConfig llm;
    int default_k = 2;
    std::size_t parallelism = 8;
    std::chrono::seconds result_ttl{24 * 3600};

    /// E_PARAM on bad numbers, E_LOAD when a path is missing.
    void validate() const;
};

struct HttpReply {
    int status = 200;
    nlohmann::json body;
};

class Service {
public:
    using Clock = std::function<std::chrono::system_clock::time_point()>;

    Service(ServiceConfig config, RouterModel model, KnowledgeBase kb);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Loads model and KB named by the config. E_LOAD on failure.
    static std::unique_ptr<Service> load(const ServiceConfig& config);

    HttpReply health() const;
    HttpReply explain(const nlohmann::json& body);
    HttpReply followup(const nlohmann::json& body);
    HttpReply list_kb(std::size_t offset, std::size_t limit) const;
    HttpReply insert_kb(const nlohmann::json& body);
    HttpReply review(const nlohmann::json& body);
    HttpReply retrieve(const nlohmann::json& body, std::optional<int> k) const;

    /// Binds and serves on a background thread. E_BIND when the port is taken.
    void start();
    int port() const { return bound_port_; }
    /// Stops accepting requests, waits for in-flight ones and writes the KB.
    void stop();

    const KnowledgeBase& kb() const { return kb_; }
    std::size_t cached_results() const;
    void set_clock(Clock clock) { clock_ = std::move(clock); }

private:
    struct CachedResult {
        ExplainRequest request;
        ExplanationResult result;
        std::chrono::system_clock::time_point created;
        std::optional<Session> session;
        bool reviewed = false;
    };

    std::shared_ptr<CachedResult> find_result(const std::string& id);
    void expire_results();
    void persist_kb();

    ServiceConfig config_;
    RouterModel model_;
    KnowledgeBase kb_;
    Clock clock_;

    mutable std::mutex cache_mutex_;
    std::map<std::string, std::shared_ptr<CachedResult>> cache_;
    std::uint64_t next_result_ = 1;

    std::mutex write_mutex_;  // KB mutation plus persist

    std::unique_ptr<httplib::Server> server_;
    std::thread server_thread_;
    int bound_port_ = 0;
};

}  // namespace htapx
