#pragma once

#include <atomic>
#include <cctype>
#include <filesystem>
#include <random>
#include <regex>
#include <string>
#include <unistd.h>

#include "htapx/error.hpp"
#include "htapx/knowledge_base.hpp"
#include "htapx/plan.hpp"
#include "htapx/router.hpp"
#include "htapx/util.hpp"
#include "htapx/workload.hpp"

#ifndef HTAPX_SOURCE_DIR
#error "HTAPX_SOURCE_DIR must be defined"
#endif

namespace testsupport {

inline std::string source_path(const std::string& relative) {
    return (std::filesystem::path(HTAPX_SOURCE_DIR) / relative).string();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("htapx-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Runs `fn` and returns the code of the htapx::Error it throws.
template <typename Fn>
std::string error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const htapx::Error& e) {
        return std::string(htapx::error_code_name(e.code()));
    } catch (const std::exception& e) {
        return std::string("std::exception: ") + e.what();
    }
    return "no error";
}

// ---------------------------------------------------------------------------
// Published listings, read straight out of the LaTeX source.

inline std::string published_source() { return htapx::read_file(source_path("paper.md")); }

inline void replace_all(std::string& text, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size()) {
        text.replace(pos, from.size(), to);
    }
}

/// Drops `\command{` and its matching close brace, keeping the argument.
inline std::string unwrap(std::string text, const std::string& command) {
    const std::string open = "\\" + command + "{";
    for (std::size_t pos; (pos = text.find(open)) != std::string::npos;) {
        int depth = 1;
        std::size_t i = pos + open.size();
        for (; i < text.size() && depth > 0; ++i) {
            if (text[i] == '{') ++depth;
            if (text[i] == '}') --depth;
        }
        text.erase(i - 1, 1);
        text.erase(pos, open.size());
    }
    return text;
}

/// TP (index 0) or AP (index 1) plan listing from the plan-details table, as JSON text.
inline std::string published_plan_json(int which) {
    const std::string src = published_source();
    const std::string marker = which == 0 ? "Details of TP's Plan" : "Details of AP's plan";
    std::size_t start = src.find(marker);
    start = src.find("\\footnotesize{\\{", start);
    start += std::string("\\footnotesize{").size();
    std::string body = src.substr(start);
    replace_all(body, "\\{", "{");
    replace_all(body, "\\}", "}");
    body = unwrap(body, "textit");
    replace_all(body, "\\textquotesingle ", "\"");
    replace_all(body, "\\textquotesingle", "\"");
    int depth = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] == '{') ++depth;
        if (body[i] == '}' && --depth == 0) return body.substr(0, i + 1);
    }
    return body;
}

inline std::string collapse_whitespace(const std::string& text) {
    std::string out;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

/// Plain text of one cell of the prompt table. LaTeX markup is removed, line
/// structure is kept.
inline std::string published_prompt_cell(const std::string& label) {
    const std::string src = published_source();
    std::size_t start = src.find("\\textbf{" + label + "}");
    start += label.size() + 9;
    std::size_t end = src.find("\\midrule", start);
    std::size_t end2 = src.find("\\bottomrule", start);
    std::string body = src.substr(start, std::min(end, end2) - start);
    replace_all(body, "\\footnotesize", "");
    replace_all(body, "\\begin{itemize}[leftmargin=*]", "");
    replace_all(body, "\\end{itemize}", "");
    replace_all(body, "\\item ", "- ");
    replace_all(body, "\\_", "_");
    replace_all(body, "``", "\"");
    replace_all(body, "''", "\"");
    for (const char* cmd : {"textbf", "texttt", "textit"}) body = unwrap(body, cmd);
    replace_all(body, "\\\\", "");
    return body;
}

// ---------------------------------------------------------------------------
// Shared artifacts

inline htapx::PlanPair example1_fixture_pair() {
    auto j = nlohmann::json::parse(htapx::read_file(source_path("fixtures/example1.json")));
    return htapx::pair_from_json(j.at("plan_pair"));
}

inline htapx::RouterModel reference_model() {
    return htapx::load_model(source_path("tests/data/router_reference.bin"));
}

inline const htapx::Dataset& default_dataset() {
    static const htapx::Dataset d =
        htapx::build_dataset(htapx::SchemaCatalog::tpch(), 400, 20, 200, 1);
    return d;
}

inline htapx::KnowledgeBase seed_kb(const htapx::RouterModel& model) {
    return htapx::build_seed_kb(default_dataset().kb, model, htapx::SchemaCatalog::tpch());
}

inline std::vector<double> random_key(std::mt19937_64& gen, std::size_t dim = 16) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> key(dim);
    for (auto& v : key) v = normal(gen);
    return key;
}

}  // namespace testsupport
