#include "htapx/pipeline.hpp"

#include <chrono>

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string_view status_name(ExplainStatus status) {
    switch (status) {
        case ExplainStatus::Explained: return "EXPLAINED";
        case ExplainStatus::NoneResponse: return "NONE_RESPONSE";
        case ExplainStatus::Error: return "ERROR";
    }
    return "ERROR";
}

json explanation_to_json(const ExplanationResult& r) {
    json retrieved = json::array();
    for (const auto& [id, sim] : r.retrieved) retrieved.push_back({{"id", id}, {"similarity", sim}});
    json out{{"status", status_name(r.status)},
             {"explanation", r.explanation ? json(*r.explanation) : json(nullptr)},
             {"retrieved", retrieved},
             {"timings",
              {{"encode_ms", r.timings.encode_ms},
               {"search_ms", r.timings.search_ms},
               {"llm_think_ms", r.timings.llm_think_ms},
               {"llm_generate_ms", r.timings.llm_generate_ms}}},
             {"prompt_fingerprint", r.prompt_fingerprint}};
    if (r.error) out["error"] = *r.error;
    return out;
}

ExplanationResult explain(const ExplainRequest& request, const RouterModel& model,
                          const KnowledgeBase& store, const LlmConfig& llm) {
    if (request.k < 1) throw Error(ErrorCode::Param, "k must be at least 1");
    request.question.pair.validate();
    ExplanationResult out;

    auto t0 = Clock::now();
    out.key = embed_pair(model, request.question.pair);
    auto t1 = Clock::now();
    std::vector<SimilarityHit> hits;
    if (!request.baseline) hits = store.top_k(out.key, request.k);
    auto t2 = Clock::now();
    out.timings.encode_ms = elapsed_ms(t0, t1);
    out.timings.search_ms = elapsed_ms(t1, t2);
    for (const auto& h : hits) out.retrieved.emplace_back(h.entry->id, h.similarity);

    out.prompt = request.baseline
                     ? build_baseline_prompt(request.question, request.user_context)
                     : build_prompt(request.question, hits, request.user_context);
    out.prompt_fingerprint = out.prompt.fingerprint();

    Completion completion;
    try {
        completion = complete(llm, out.prompt);
    } catch (const Error& e) {
        out.status = ExplainStatus::Error;
        out.error = e.what();
        return out;
    }
    out.timings.llm_think_ms = completion.think_ms;
    out.timings.llm_generate_ms = completion.generate_ms;

    ParsedResponse parsed = parse_response(completion.text);
    if (parsed.is_none) {
        out.status = ExplainStatus::NoneResponse;
    } else if (trim(parsed.text).empty()) {
        out.status = ExplainStatus::Error;
        out.error = "E_LLM: empty completion";
    } else {
        out.status = ExplainStatus::Explained;
        out.explanation = parsed.text;
    }
    return out;
}

std::string_view verdict_name(Verdict verdict) {
    return verdict == Verdict::Correct ? "CORRECT" : "INCORRECT";
}

Verdict parse_verdict(std::string_view name) {
    if (name == "CORRECT") return Verdict::Correct;
    if (name == "INCORRECT") return Verdict::Incorrect;
    throw Error(ErrorCode::Param, "verdict must be CORRECT or INCORRECT");
}

void ReviewRecord::validate() const {
    if (verdict == Verdict::Incorrect && (!corrected_text || trim(*corrected_text).empty())) {
        throw Error(ErrorCode::Param, "an INCORRECT verdict needs corrected text");
    }
}

std::int64_t apply_review(KnowledgeBase& store, const ReviewRecord& review,
                          const ExplanationResult& result, const Question& question) {
    if (result.status != ExplainStatus::Explained || !result.explanation) {
        throw Error(ErrorCode::State, std::string("cannot review a ") +
                                          std::string(status_name(result.status)) + " result");
    }
    if (!question.result) {
        throw Error(ErrorCode::State, "a reviewed question needs its execution result");
    }
    review.validate();
    KnowledgeEntry entry;
    entry.key = result.key;
    entry.query_text = question.query_text;
    entry.plan_details = question.pair;
    entry.execution_result = *question.result;
    if (review.verdict == Verdict::Incorrect) {
        entry.explanation = *review.corrected_text;
        entry.provenance = Provenance::ExpertCorrection;
    } else {
        entry.explanation = *result.explanation;
        entry.provenance = Provenance::ApprovedGeneration;
    }
    return store.insert(std::move(entry));
}

Session Session::start(const ExplanationResult& result) {
    if (result.status != ExplainStatus::Explained || !result.explanation) {
        throw Error(ErrorCode::State, "follow-ups need an explained result");
    }
    Session s;
    s.prompt_ = result.prompt;
    s.transcript_ = prompt_messages(result.prompt);
    s.transcript_.push_back({"assistant", *result.explanation});
    return s;
}

std::string Session::followup(const std::string& question, const LlmConfig& llm) {
    if (transcript_.empty()) throw Error(ErrorCode::State, "session has no prior explanation");
    if (trim(question).empty()) throw Error(ErrorCode::Param, "follow-up question is empty");
    auto messages = transcript_;
    messages.push_back({"user", question});
    Completion c = complete_messages(llm, messages, prompt_);
    transcript_ = std::move(messages);
    transcript_.push_back({"assistant", c.text});
    return c.text;
}

}  // namespace htapx
