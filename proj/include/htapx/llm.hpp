#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "htapx/prompt.hpp"

namespace htapx {

enum class LlmProvider { Mock, Remote };

/// How the mock answers:
///   Echo      first knowledge block's expert explanation, "None" without knowledge
///   Fixture   text looked up by prompt fingerprint, falling back to Echo
///   None      always "None"
///   NoneBelow "None" when fewer than `none_below` knowledge blocks, else Echo
enum class MockMode { Echo, Fixture, None, NoneBelow };

std::string_view provider_name(LlmProvider provider);
LlmProvider parse_provider(std::string_view name);
std::string_view mock_mode_name(MockMode mode);
MockMode parse_mock_mode(std::string_view name);

inline constexpr const char* kApiKeyVar = "HTAPX_LLM_API_KEY";
inline constexpr const char* kEndpointVar = "HTAPX_LLM_ENDPOINT";
inline constexpr const char* kModelVar = "HTAPX_LLM_MODEL";

struct LlmConfig {
    LlmProvider provider = LlmProvider::Mock;
    std::string endpoint;  // e.g. https://host/v1/chat/completions
    std::string model_name = "mock";
    int timeout_ms = 60000;
    int max_output_tokens = 1024;
    std::string api_key;  // never serialized

    MockMode mock_mode = MockMode::Echo;
    std::size_t none_below = 2;
    std::map<std::string, std::string> fixtures;  // prompt fingerprint -> answer

    /// E_PARAM on bad numbers, E_AUTH when REMOTE lacks a credential.
    void validate() const;

    static LlmConfig mock(MockMode mode = MockMode::Echo);
    /// REMOTE settings from the environment; `endpoint`/`model` override it
    /// when non-empty.
    static LlmConfig remote_from_env(const std::string& endpoint = "",
                                     const std::string& model = "");
};

/// Fixture file: JSON object mapping prompt fingerprints to answers.
std::map<std::string, std::string> load_fixtures(const std::string& path);

struct ChatMessage {
    std::string role;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// System message with background and task, user message with the rest.
std::vector<ChatMessage> prompt_messages(const PromptBundle& bundle);

struct Completion {
    std::string text;
    double think_ms = 0.0;     // request sent until the full response arrived
    double generate_ms = 0.0;  // decoding the response body into text
    int attempts = 1;
};

nlohmann::json chat_request_body(const LlmConfig& config, const std::vector<ChatMessage>& messages);

/// Sends a transcript. `bundle` gives the mock the prompt it answers from.
/// Throws E_TIMEOUT, E_AUTH, E_HTTP or E_LLM.
Completion complete_messages(const LlmConfig& config, const std::vector<ChatMessage>& messages,
                             const PromptBundle& bundle);
Completion complete(const LlmConfig& config, const PromptBundle& bundle);

struct ParsedResponse {
    bool is_none = false;
    std::string text;  // verbatim when not None
};

/// "None" after trimming and case folding, optionally with one trailing period.
ParsedResponse parse_response(const std::string& raw);

}  // namespace htapx
