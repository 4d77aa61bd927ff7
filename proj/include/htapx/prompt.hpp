#pragma once

#include <optional>
#include <string>
#include <vector>

#include "htapx/knowledge_base.hpp"
#include "htapx/plan.hpp"

namespace htapx {

namespace assets {
extern const char* const kTemplateVersion;
extern const char* const kBackground;
extern const char* const kTask;
extern const char* const kRetriever;
extern const char* const kExampleUserContext;
}  // namespace assets

/// Prompt wording. `retriever` is the part of the task description that only
/// makes sense when knowledge is attached; baseline prompts leave it out.
struct PromptTemplates {
    std::string version;
    std::string background;
    std::string task;
    std::string retriever;

    static const PromptTemplates& builtin();
    /// Reads VERSION, background.txt, task.txt and retriever.txt from `dir`.
    static PromptTemplates load_dir(const std::string& dir);
};

/// The query under explanation. Without a result the prompt asks about the
/// plans alone.
struct Question {
    std::string query_text;
    PlanPair pair;
    std::optional<ExecutionResult> result;
};

struct PromptBundle {
    std::string background;
    std::string task_description;
    std::vector<std::string> knowledge_blocks;
    std::string question_block;
    std::optional<std::string> user_context;

    /// Background and task.
    std::string system_text() const;
    /// Knowledge blocks, the question, then user context.
    std::string user_text() const;
    std::string render() const;
    std::string fingerprint() const;
};

inline constexpr const char* kQuestionHeader = "[QUESTION]";

std::string normalize_newlines(std::string text);
std::string render_result_line(const ExecutionResult& result);
std::string render_knowledge_block(std::size_t rank, const KnowledgeEntry& entry);
std::string render_question_block(const Question& question);

PromptBundle build_prompt(const Question& question, const std::vector<SimilarityHit>& hits,
                          const std::optional<std::string>& user_context,
                          const PromptTemplates& templates = PromptTemplates::builtin());

PromptBundle build_baseline_prompt(const Question& question,
                                   const std::optional<std::string>& user_context,
                                   const PromptTemplates& templates = PromptTemplates::builtin());

/// Number of "[KNOWLEDGE n]" header lines in rendered prompt text.
std::size_t count_knowledge_blocks(const std::string& text);
std::size_t count_question_blocks(const std::string& text);

/// Expert explanations recovered from rendered knowledge blocks, in order.
std::vector<std::string> knowledge_explanations(const PromptBundle& bundle);

}  // namespace htapx
