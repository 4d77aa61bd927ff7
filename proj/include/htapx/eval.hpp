#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "htapx/knowledge_base.hpp"
#include "htapx/llm.hpp"
#include "htapx/pipeline.hpp"
#include "htapx/router.hpp"
#include "htapx/workload.hpp"

namespace htapx {

struct Score {
    double accuracy = 0.0;    // correct / non-error results
    double none_rate = 0.0;   // None answers / non-error results
    double error_rate = 0.0;  // errors / all results
    std::size_t correct = 0;
    std::size_t none = 0;
    std::size_t errors = 0;
    std::size_t total = 0;
};

/// One verdict per Explained result, in result order. E_LABELS otherwise.
Score score(const std::vector<ExplanationResult>& results, const std::vector<Verdict>& verdicts);

/// Stand-in judge for mock runs: correct when the text opens by naming the
/// actual winner as faster.
Verdict mock_judge(const std::string& explanation, const ExecutionResult& truth);

/// Verdict labels keyed by (k, query index).
using VerdictLabels = std::map<std::pair<int, std::size_t>, Verdict>;

/// Lines of {"k": 2, "index": 0, "verdict": "CORRECT"}.
VerdictLabels read_labels(const std::string& path);

struct KRow {
    int k = 0;
    std::size_t n_queries = 0;
    double accuracy = 0.0;
    double none_rate = 0.0;
    double error_rate = 0.0;
};

/// Published figures, printed beside measured rows for comparison only.
struct ReferenceRow {
    std::string k_label;
    double accuracy_low = 0.0;
    double accuracy_high = 0.0;
    std::optional<double> none_rate;
};

const std::vector<ReferenceRow>& reference_rows();

struct EvalReport {
    std::vector<KRow> rows;
    std::string provider;
    std::string dataset_fingerprint;
    double seconds = 0.0;

    std::string to_table() const;
    /// One JSON record per row.
    std::string to_jsonl() const;
};

std::string dataset_fingerprint(const std::vector<LabeledExample>& examples);

struct SweepOptions {
    std::vector<int> k_values{1, 2, 3, 4, 5};
    std::size_t parallelism = 1;
    std::optional<VerdictLabels> labels;  // required unless the provider is MOCK
};

EvalReport run_k_sweep(const std::vector<LabeledExample>& test_set, const RouterModel& model,
                       const KnowledgeBase& store, const LlmConfig& llm, const SweepOptions& options);

struct Stat {
    double mean = 0.0;
    double p95 = 0.0;
};

/// Mean and 95th percentile after dropping the first 10% as warm-up.
Stat warm_stat(const std::vector<double>& samples_ms);

struct TimingReport {
    Stat encode_ms;
    Stat search_ms;
    std::optional<double> llm_think_ms;
    std::optional<double> llm_generate_ms;
    std::size_t kb_size = 0;
    std::size_t n_requests = 0;

    std::string to_table() const;
};

/// Times embed_pair and top_k(k=2) separately, single-threaded, cycling
/// through `pairs`. LLM figures are averaged from `recent` when given.
TimingReport measure_timings(const RouterModel& model, const KnowledgeBase& store,
                             const std::vector<PlanPair>& pairs, std::size_t n_requests,
                             const std::vector<ExplanationResult>& recent = {});

}  // namespace htapx
