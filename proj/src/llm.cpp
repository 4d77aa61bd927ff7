#include "htapx/llm.hpp"

#include <chrono>
#include <cstdlib>

#include "httplib.h"

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string_view provider_name(LlmProvider provider) {
    return provider == LlmProvider::Mock ? "mock" : "remote";
}

LlmProvider parse_provider(std::string_view name) {
    std::string n = to_lower(name);
    if (n == "mock") return LlmProvider::Mock;
    if (n == "remote") return LlmProvider::Remote;
    throw Error(ErrorCode::Param, "unknown LLM provider '" + std::string(name) + "'");
}

std::string_view mock_mode_name(MockMode mode) {
    switch (mode) {
        case MockMode::Echo: return "echo";
        case MockMode::Fixture: return "fixture";
        case MockMode::None: return "none";
        case MockMode::NoneBelow: return "none-below";
    }
    return "echo";
}

MockMode parse_mock_mode(std::string_view name) {
    std::string n = to_lower(name);
    if (n == "echo") return MockMode::Echo;
    if (n == "fixture") return MockMode::Fixture;
    if (n == "none") return MockMode::None;
    if (n == "none-below") return MockMode::NoneBelow;
    throw Error(ErrorCode::Param, "unknown mock mode '" + std::string(name) + "'");
}

void LlmConfig::validate() const {
    if (timeout_ms <= 0 || max_output_tokens <= 0) {
        throw Error(ErrorCode::Param, "timeout and max_output_tokens must be positive");
    }
    if (provider == LlmProvider::Remote) {
        if (endpoint.empty()) throw Error(ErrorCode::Param, "REMOTE provider needs an endpoint");
        if (api_key.empty()) {
            throw Error(ErrorCode::Auth, std::string("REMOTE provider needs ") + kApiKeyVar);
        }
    }
}

LlmConfig LlmConfig::mock(MockMode mode) {
    LlmConfig c;
    c.mock_mode = mode;
    return c;
}

LlmConfig LlmConfig::remote_from_env(const std::string& endpoint, const std::string& model) {
    auto env = [](const char* name) {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    };
    LlmConfig c;
    c.provider = LlmProvider::Remote;
    c.endpoint = endpoint.empty() ? env(kEndpointVar) : endpoint;
    c.model_name = model.empty() ? env(kModelVar) : model;
    if (c.model_name.empty()) c.model_name = "gpt-4";
    c.api_key = env(kApiKeyVar);
    return c;
}

std::map<std::string, std::string> load_fixtures(const std::string& path) {
    try {
        return json::parse(read_file(path)).get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Schema, "bad fixture file " + path + ": " + e.what());
    }
}

std::vector<ChatMessage> prompt_messages(const PromptBundle& bundle) {
    return {{"system", bundle.system_text()}, {"user", bundle.user_text()}};
}

json chat_request_body(const LlmConfig& config, const std::vector<ChatMessage>& messages) {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", config.model_name}, {"messages", msgs}, {"max_tokens", config.max_output_tokens}};
}

namespace {

std::string mock_answer(const LlmConfig& config, const std::vector<ChatMessage>& messages,
                        const PromptBundle& bundle) {
    const auto explanations = knowledge_explanations(bundle);
    auto echo = [&]() -> std::string {
        if (explanations.empty()) return "None";
        // Follow-up turns get an answer that differs from the first one.
        if (messages.size() > 2) return "Regarding \"" + messages.back().content + "\": " + explanations.front();
        return explanations.front();
    };
    switch (config.mock_mode) {
        case MockMode::None: return "None";
        case MockMode::NoneBelow:
            return explanations.size() < config.none_below ? "None" : echo();
        case MockMode::Fixture: {
            std::string fp = messages.size() > 2
                                 ? hex64(fnv1a64(chat_request_body(config, messages).dump()))
                                 : bundle.fingerprint();
            auto it = config.fixtures.find(fp);
            if (it != config.fixtures.end()) return it->second;
            return echo();
        }
        case MockMode::Echo: return echo();
    }
    return echo();
}

class TransportError : public Error {
public:
    explicit TransportError(const std::string& message) : Error(ErrorCode::Llm, message) {}
};

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_endpoint(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw Error(ErrorCode::Param, "endpoint must be an absolute URL: " + url);
    }
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, slash), url.substr(slash)};
}

Completion remote_once(const LlmConfig& config, const std::vector<ChatMessage>& messages) {
    const Endpoint ep = split_endpoint(config.endpoint);
    httplib::Client client(ep.origin);
    const time_t sec = config.timeout_ms / 1000;
    const time_t usec = (config.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers headers{{"Authorization", "Bearer " + config.api_key}};

    const auto start = Clock::now();
    auto res = client.Post(ep.path, headers, chat_request_body(config, messages).dump(),
                           "application/json");
    const auto received = Clock::now();
    if (!res) {
        auto err = res.error();
        const double waited = elapsed_ms(start, received);
        if (err == httplib::Error::ConnectionTimeout ||
            (err == httplib::Error::Read && waited >= 0.9 * config.timeout_ms)) {
            throw Error(ErrorCode::Timeout, "no response within " + std::to_string(config.timeout_ms) + " ms");
        }
        throw TransportError("transport error: " + httplib::to_string(err));
    }
    if (res->status == 401 || res->status == 403) {
        throw Error(ErrorCode::Auth, "endpoint rejected the credential (status " +
                                         std::to_string(res->status) + ")");
    }
    if (res->status < 200 || res->status >= 300) {
        throw HttpError(res->status, res->body.substr(0, 200));
    }
    Completion c;
    try {
        json body = json::parse(res->body);
        c.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Llm, std::string("malformed completion response: ") + e.what());
    }
    c.think_ms = elapsed_ms(start, received);
    c.generate_ms = elapsed_ms(received, Clock::now());
    return c;
}

}  // namespace

Completion complete_messages(const LlmConfig& config, const std::vector<ChatMessage>& messages,
                             const PromptBundle& bundle) {
    config.validate();
    if (config.provider == LlmProvider::Mock) {
        const auto start = Clock::now();
        Completion c;
        c.text = mock_answer(config, messages, bundle);
        c.think_ms = elapsed_ms(start, Clock::now());
        return c;
    }
    // One retry for transport failures only. Auth, HTTP status and timeout
    // errors surface immediately.
    try {
        return remote_once(config, messages);
    } catch (const TransportError&) {
    }
    Completion c = remote_once(config, messages);
    c.attempts = 2;
    return c;
}

Completion complete(const LlmConfig& config, const PromptBundle& bundle) {
    return complete_messages(config, prompt_messages(bundle), bundle);
}

ParsedResponse parse_response(const std::string& raw) {
    std::string folded = to_lower(trim(raw));
    if (!folded.empty() && folded.back() == '.') folded.pop_back();
    if (folded == "none") return {true, {}};
    return {false, raw};
}

}  // namespace htapx
