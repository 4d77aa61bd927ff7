#include "htapx/service.hpp"

#include <filesystem>

#include "httplib.h"

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using nlohmann::json;

void ServiceConfig::validate() const {
    if (default_k < 1) throw Error(ErrorCode::Param, "default k must be at least 1");
    if (parallelism < 1) throw Error(ErrorCode::Param, "parallelism must be at least 1");
    if (port < 0 || port > 65535) throw Error(ErrorCode::Param, "port out of range");
    if (!std::filesystem::exists(model_path)) {
        throw Error(ErrorCode::Load, "model file not found: " + model_path);
    }
    if (!std::filesystem::exists(kb_path)) {
        throw Error(ErrorCode::Load, "knowledge base not found: " + kb_path);
    }
    llm.validate();
}

namespace {

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Schema:
        case ErrorCode::Syntax:
        case ErrorCode::Arity:
        case ErrorCode::Param:
        case ErrorCode::Mismatch:
        case ErrorCode::Dim:
        case ErrorCode::Vocab:
        case ErrorCode::Unsupported: return 400;
        case ErrorCode::NotFound: return 404;
        case ErrorCode::State: return 409;
        default: return 500;
    }
}

HttpReply error_reply(int status, std::string_view code, const std::string& message) {
    return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

HttpReply error_reply(const Error& e) {
    return error_reply(status_for(e.code()), error_code_name(e.code()), e.what());
}

template <typename F>
HttpReply guarded(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return error_reply(e);
    } catch (const json::exception& e) {
        return error_reply(400, "E_SCHEMA", e.what());
    } catch (const std::exception& e) {
        return error_reply(500, "E_INTERNAL", e.what());
    }
}

std::string require_string(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) {
        throw Error(ErrorCode::Schema, std::string("field '") + key + "' must be a string");
    }
    return body.at(key).get<std::string>();
}

json hit_to_json(const SimilarityHit& hit) {
    const KnowledgeEntry& e = *hit.entry;
    return {{"id", e.id},
            {"similarity", hit.similarity},
            {"query_text", e.query_text},
            {"execution_result", result_to_json(e.execution_result)},
            {"explanation", e.explanation},
            {"provenance", provenance_name(e.provenance)}};
}

PlanPair pair_from_body(const json& body) {
    if (!body.is_object() || !body.contains("plan_pair")) {
        throw Error(ErrorCode::Schema, "field 'plan_pair' is required");
    }
    PlanPair pair = pair_from_json(body.at("plan_pair"));
    pair.validate();
    return pair;
}

}  // namespace

Service::Service(ServiceConfig config, RouterModel model, KnowledgeBase kb)
    : config_(std::move(config)),
      model_(std::move(model)),
      kb_(std::move(kb)),
      clock_([] { return std::chrono::system_clock::now(); }) {}

Service::~Service() {
    if (server_) stop();
}

std::unique_ptr<Service> Service::load(const ServiceConfig& config) {
    config.validate();
    try {
        RouterModel model = load_model(config.model_path);
        KnowledgeBase kb = KnowledgeBase::load(config.kb_path);
        if (!config.templates_dir.empty()) PromptTemplates::load_dir(config.templates_dir);
        return std::make_unique<Service>(config, std::move(model), std::move(kb));
    } catch (const Error& e) {
        throw Error(ErrorCode::Load, e.what());
    }
}

HttpReply Service::health() const {
    return {200, json{{"status", "ok"}, {"kb_size", kb_.size()}, {"model_version", model_.fingerprint()}}};
}

HttpReply Service::explain(const json& body) {
    return guarded([&] {
        ExplainRequest req;
        req.question.pair = pair_from_body(body);
        if (body.contains("query_text") && body.at("query_text").is_string()) {
            req.question.query_text = body.at("query_text").get<std::string>();
        } else if (req.question.pair.query_text) {
            req.question.query_text = *req.question.pair.query_text;
        }
        if (body.contains("execution_result") && !body.at("execution_result").is_null()) {
            req.question.result = result_from_json(body.at("execution_result"));
        }
        if (body.contains("user_context") && body.at("user_context").is_string()) {
            req.user_context = body.at("user_context").get<std::string>();
        }
        req.k = body.contains("k") ? body.at("k").get<int>() : config_.default_k;
        req.baseline = body.value("baseline", false);

        auto cached = std::make_shared<CachedResult>();
        cached->request = req;
        cached->result = htapx::explain(req, model_, kb_, config_.llm);
        cached->created = clock_();

        std::string id;
        {
            std::lock_guard lock(cache_mutex_);
            id = "r" + std::to_string(next_result_++);
            cache_[id] = cached;
        }
        expire_results();
        json out = explanation_to_json(cached->result);
        out["result_id"] = id;
        out["query_text"] = req.question.query_text;
        return HttpReply{200, out};
    });
}

HttpReply Service::followup(const json& body) {
    return guarded([&] {
        std::string id = require_string(body, "result_id");
        std::string question = require_string(body, "question");
        auto cached = find_result(id);
        if (!cached) return error_reply(404, "E_NOT_FOUND", "unknown or expired result " + id);
        // Sessions are confined to one conversation, so a result's turns are serialized.
        static std::mutex session_mutex;
        std::lock_guard lock(session_mutex);
        if (!cached->session) cached->session = Session::start(cached->result);
        std::string answer = cached->session->followup(question, config_.llm);
        json transcript = json::array();
        for (const auto& m : cached->session->transcript()) {
            transcript.push_back({{"role", m.role}, {"content", m.content}});
        }
        return HttpReply{200, json{{"result_id", id}, {"answer", answer}, {"transcript", transcript}}};
    });
}

HttpReply Service::list_kb(std::size_t offset, std::size_t limit) const {
    return guarded([&] {
        json entries = json::array();
        for (const auto& e : kb_.list(offset, limit)) entries.push_back(entry_to_json(e));
        return HttpReply{200, json{{"total", kb_.size()},
                                   {"offset", offset},
                                   {"limit", limit},
                                   {"entries", entries}}};
    });
}

HttpReply Service::insert_kb(const json& body) {
    return guarded([&] {
        KnowledgeEntry entry = entry_from_json(body);
        entry.plan_details.validate();
        if (entry.key.empty()) entry.key = embed_pair(model_, entry.plan_details);
        if (!body.contains("provenance")) entry.provenance = Provenance::ExpertSeed;
        std::int64_t id;
        {
            std::lock_guard lock(write_mutex_);
            id = kb_.insert(std::move(entry));
            persist_kb();
        }
        return HttpReply{200, json{{"id", id}, {"kb_size", kb_.size()}}};
    });
}

HttpReply Service::review(const json& body) {
    return guarded([&] {
        std::string id = require_string(body, "result_id");
        ReviewRecord record;
        record.verdict = parse_verdict(require_string(body, "verdict"));
        if (body.contains("corrected_text") && body.at("corrected_text").is_string()) {
            record.corrected_text = body.at("corrected_text").get<std::string>();
        }
        record.reviewer = body.value("reviewer", std::string("anonymous"));
        record.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                               clock_().time_since_epoch()).count();
        auto cached = find_result(id);
        if (!cached) return error_reply(404, "E_NOT_FOUND", "unknown or expired result " + id);

        std::lock_guard lock(write_mutex_);
        if (cached->reviewed) {
            return error_reply(409, "E_STATE", "result " + id + " was already reviewed");
        }
        std::int64_t entry_id = apply_review(kb_, record, cached->result, cached->request.question);
        cached->reviewed = true;
        persist_kb();
        auto entry = kb_.get(entry_id);
        return HttpReply{200, json{{"entry_id", entry_id},
                                   {"kb_size", kb_.size()},
                                   {"provenance", provenance_name(entry->provenance)}}};
    });
}

HttpReply Service::retrieve(const json& body, std::optional<int> k) const {
    return guarded([&] {
        PlanPair pair = pair_from_body(body);
        int depth = k.value_or(body.contains("k") ? body.at("k").get<int>() : config_.default_k);
        auto hits = kb_.top_k(embed_pair(model_, pair), depth);
        json out = json::array();
        for (const auto& h : hits) out.push_back(hit_to_json(h));
        return HttpReply{200, json{{"k", depth}, {"hits", out}}};
    });
}

std::shared_ptr<Service::CachedResult> Service::find_result(const std::string& id) {
    expire_results();
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(id);
    return it == cache_.end() ? nullptr : it->second;
}

void Service::expire_results() {
    const auto now = clock_();
    std::lock_guard lock(cache_mutex_);
    for (auto it = cache_.begin(); it != cache_.end();) {
        if (now - it->second->created >= config_.result_ttl) {
            it = cache_.erase(it);
        } else {
            ++it;
        }
    }
}

std::size_t Service::cached_results() const {
    std::lock_guard lock(cache_mutex_);
    return cache_.size();
}

void Service::persist_kb() {
    if (!config_.kb_path.empty()) kb_.persist(config_.kb_path);
}

void Service::start() {
    if (server_) throw Error(ErrorCode::State, "service already running");
    server_ = std::make_unique<httplib::Server>();
    auto& svr = *server_;
    const std::size_t threads = config_.parallelism;
    // Plain SO_REUSEADDR only; the library default adds SO_REUSEPORT, which lets
    // a second server share a port that is already taken.
    svr.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    auto send = [](httplib::Response& res, const HttpReply& reply) {
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
    };
    auto parse_body = [](const httplib::Request& req) -> json {
        if (req.body.empty()) return json::object();
        try {
            return json::parse(req.body);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Syntax, std::string("request body is not JSON: ") + e.what());
        }
    };
    auto with_body = [send, parse_body](auto handler) {
        return [send, parse_body, handler](const httplib::Request& req, httplib::Response& res) {
            HttpReply reply = guarded([&] { return handler(req, parse_body(req)); });
            send(res, reply);
        };
    };
    auto query_int = [](const httplib::Request& req, const char* name) -> std::optional<long> {
        if (!req.has_param(name)) return std::nullopt;
        try {
            return std::stol(req.get_param_value(name));
        } catch (const std::exception&) {
            throw Error(ErrorCode::Param, std::string("query parameter '") + name + "' must be an integer");
        }
    };

    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) {
        send(res, health());
    });
    svr.Post("/api/explain", with_body([this](const httplib::Request&, const json& body) {
                 return explain(body);
             }));
    svr.Post("/api/followup", with_body([this](const httplib::Request&, const json& body) {
                 return followup(body);
             }));
    svr.Post("/api/review", with_body([this](const httplib::Request&, const json& body) {
                 return review(body);
             }));
    svr.Post("/api/kb", with_body([this](const httplib::Request&, const json& body) {
                 return insert_kb(body);
             }));
    svr.Get("/api/kb", with_body([this, query_int](const httplib::Request& req, const json&) {
                auto offset = query_int(req, "offset").value_or(0);
                auto limit = query_int(req, "limit").value_or(50);
                if (offset < 0 || limit < 1) throw Error(ErrorCode::Param, "bad pagination");
                return list_kb(static_cast<std::size_t>(offset), static_cast<std::size_t>(limit));
            }));
    auto retrieve_handler = with_body([this, query_int](const httplib::Request& req, const json& body) {
        auto k = query_int(req, "k");
        return retrieve(body, k ? std::optional<int>(static_cast<int>(*k)) : std::nullopt);
    });
    svr.Get("/api/retrieve", retrieve_handler);
    svr.Post("/api/retrieve", retrieve_handler);

    if (config_.port == 0) {
        bound_port_ = svr.bind_to_any_port(config_.host);
    } else {
        bound_port_ = svr.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    if (bound_port_ <= 0) {
        server_.reset();
        throw Error(ErrorCode::Bind, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    server_thread_ = std::thread([&svr] { svr.listen_after_bind(); });
    svr.wait_until_ready();
}

void Service::stop() {
    if (server_) {
        server_->stop();
        if (server_thread_.joinable()) server_thread_.join();
        server_.reset();
    }
    std::lock_guard lock(write_mutex_);
    persist_kb();
}

}  // namespace htapx
