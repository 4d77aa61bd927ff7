#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "htapx/knowledge_base.hpp"
#include "htapx/llm.hpp"
#include "htapx/prompt.hpp"
#include "htapx/router.hpp"

namespace htapx {

enum class ExplainStatus { Explained, NoneResponse, Error };

std::string_view status_name(ExplainStatus status);

struct Timings {
    double encode_ms = 0.0;
    double search_ms = 0.0;
    double llm_think_ms = 0.0;
    double llm_generate_ms = 0.0;
};

struct ExplainRequest {
    Question question;
    std::optional<std::string> user_context;
    int k = 2;
    bool baseline = false;  // skip retrieval and use the baseline prompt
};

struct ExplanationResult {
    ExplainStatus status = ExplainStatus::Error;
    std::optional<std::string> explanation;
    std::vector<std::pair<std::int64_t, double>> retrieved;  // (entry id, similarity)
    Timings timings;
    std::string prompt_fingerprint;
    std::optional<std::string> error;

    PairEmbedding key;
    PromptBundle prompt;
};

nlohmann::json explanation_to_json(const ExplanationResult& result);

/// embed_pair -> top_k -> build_prompt -> complete -> parse_response.
/// Provider failures give status Error; the store is never modified.
ExplanationResult explain(const ExplainRequest& request, const RouterModel& model,
                          const KnowledgeBase& store, const LlmConfig& llm);

enum class Verdict { Correct, Incorrect };

std::string_view verdict_name(Verdict verdict);
Verdict parse_verdict(std::string_view name);

struct ReviewRecord {
    Verdict verdict = Verdict::Correct;
    std::optional<std::string> corrected_text;
    std::string reviewer;
    std::int64_t timestamp = 0;  // seconds since the epoch

    /// E_PARAM when an Incorrect verdict has no corrected text.
    void validate() const;
};

/// Adds the reviewed explanation to the store keyed by the question's
/// embedding. E_STATE unless the result was Explained and carries a result.
std::int64_t apply_review(KnowledgeBase& store, const ReviewRecord& review,
                          const ExplanationResult& result, const Question& question);

/// A conversation that continues from one explanation.
class Session {
public:
    Session() = default;
    static Session start(const ExplanationResult& result);

    /// Appends the question and the answer. E_STATE on an empty session.
    std::string followup(const std::string& question, const LlmConfig& llm);

    const std::vector<ChatMessage>& transcript() const { return transcript_; }
    bool empty() const { return transcript_.empty(); }

private:
    PromptBundle prompt_;
    std::vector<ChatMessage> transcript_;
};

}  // namespace htapx
