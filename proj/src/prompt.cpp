#include "htapx/prompt.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

namespace {

constexpr const char* kExplanationLabel = "Expert explanation: ";

std::string strip_final_newline(std::string text) {
    text = normalize_newlines(std::move(text));
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

std::string format_ms(double ms) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", ms);
    return buf;
}

std::string render_pair(const PlanPair& pair) {
    return "AP plan:\n" + plan_to_json(pair.ap_plan.root).dump(2) + "\nTP plan:\n" +
           plan_to_json(pair.tp_plan.root).dump(2);
}

bool starts_line(const std::string& text, std::size_t pos) {
    return pos == 0 || text[pos - 1] == '\n';
}

}  // namespace

const PromptTemplates& PromptTemplates::builtin() {
    static const PromptTemplates t{assets::kTemplateVersion, assets::kBackground, assets::kTask,
                                   assets::kRetriever};
    return t;
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    auto part = [&](const char* name) { return strip_final_newline(read_file((fs::path(dir) / name).string())); };
    PromptTemplates t{part("VERSION"), part("background.txt"), part("task.txt"), part("retriever.txt")};
    if (t.background.find("not allowed to compare the cost estimates") == std::string::npos) {
        throw Error(ErrorCode::Load, "background template lacks the cost-comparison rule");
    }
    return t;
}

std::string normalize_newlines(std::string text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

std::string PromptBundle::system_text() const {
    return background + "\n\n" + task_description;
}

std::string PromptBundle::user_text() const {
    std::string out;
    for (const auto& block : knowledge_blocks) out += block + "\n\n";
    out += question_block;
    if (user_context) out += "\n\nAdditional user context: " + *user_context;
    return out;
}

std::string PromptBundle::render() const {
    return system_text() + "\n\n" + user_text();
}

std::string PromptBundle::fingerprint() const {
    return hex64(fnv1a64(render()));
}

std::string render_result_line(const ExecutionResult& result) {
    const bool ap = result.winner == Engine::AP;
    return std::string("Execution result: ") + (ap ? "AP" : "TP") + " is faster (TP " +
           format_ms(result.tp_latency_ms) + " ms, AP " + format_ms(result.ap_latency_ms) + " ms).";
}

std::string render_knowledge_block(std::size_t rank, const KnowledgeEntry& entry) {
    std::ostringstream out;
    out << "[KNOWLEDGE " << rank << "]\n"
        << "Query: " << normalize_newlines(entry.query_text) << '\n'
        << render_pair(entry.plan_details) << '\n'
        << render_result_line(entry.execution_result) << '\n'
        << kExplanationLabel << normalize_newlines(entry.explanation);
    return out.str();
}

std::string render_question_block(const Question& question) {
    std::string out = std::string(kQuestionHeader) + "\nQuery: " +
                      normalize_newlines(question.query_text) + '\n' + render_pair(question.pair);
    if (question.result) out += '\n' + render_result_line(*question.result);
    return out;
}

PromptBundle build_prompt(const Question& question, const std::vector<SimilarityHit>& hits,
                          const std::optional<std::string>& user_context,
                          const PromptTemplates& templates) {
    PromptBundle b;
    b.background = templates.background;
    b.task_description = templates.task + "\n" + templates.retriever;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        b.knowledge_blocks.push_back(render_knowledge_block(i + 1, *hits[i].entry));
    }
    b.question_block = render_question_block(question);
    if (user_context && !trim(*user_context).empty()) {
        b.user_context = normalize_newlines(trim(*user_context));
    }
    return b;
}

PromptBundle build_baseline_prompt(const Question& question,
                                   const std::optional<std::string>& user_context,
                                   const PromptTemplates& templates) {
    PromptBundle b = build_prompt(question, {}, user_context, templates);
    b.task_description = templates.task;
    return b;
}

std::size_t count_knowledge_blocks(const std::string& text) {
    std::size_t n = 0;
    for (std::size_t pos = text.find("[KNOWLEDGE "); pos != std::string::npos;
         pos = text.find("[KNOWLEDGE ", pos + 1)) {
        if (starts_line(text, pos)) ++n;
    }
    return n;
}

std::size_t count_question_blocks(const std::string& text) {
    std::size_t n = 0;
    for (std::size_t pos = text.find(kQuestionHeader); pos != std::string::npos;
         pos = text.find(kQuestionHeader, pos + 1)) {
        if (starts_line(text, pos)) ++n;
    }
    return n;
}

std::vector<std::string> knowledge_explanations(const PromptBundle& bundle) {
    std::vector<std::string> out;
    for (const auto& block : bundle.knowledge_blocks) {
        auto pos = block.rfind(std::string("\n") + kExplanationLabel);
        if (pos != std::string::npos) {
            out.push_back(block.substr(pos + 1 + std::string(kExplanationLabel).size()));
        }
    }
    return out;
}

}  // namespace htapx
