#include "htapx/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "htapx/error.hpp"
#include "htapx/util.hpp"

namespace htapx {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

Score score(const std::vector<ExplanationResult>& results, const std::vector<Verdict>& verdicts) {
    Score s;
    s.total = results.size();
    std::size_t explained = 0;
    for (const auto& r : results) {
        if (r.status == ExplainStatus::Explained) ++explained;
        if (r.status == ExplainStatus::NoneResponse) ++s.none;
        if (r.status == ExplainStatus::Error) ++s.errors;
    }
    if (verdicts.size() != explained) {
        throw Error(ErrorCode::Labels, std::to_string(verdicts.size()) + " verdicts for " +
                                           std::to_string(explained) + " explained results");
    }
    s.correct = static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), Verdict::Correct));
    const std::size_t answered = s.total - s.errors;
    if (answered > 0) {
        s.accuracy = static_cast<double>(s.correct) / static_cast<double>(answered);
        s.none_rate = static_cast<double>(s.none) / static_cast<double>(answered);
    }
    if (s.total > 0) s.error_rate = static_cast<double>(s.errors) / static_cast<double>(s.total);
    return s;
}

Verdict mock_judge(const std::string& explanation, const ExecutionResult& truth) {
    const std::string expected = std::string(engine_name(truth.winner)) + " is faster";
    return trim(explanation).rfind(expected, 0) == 0 ? Verdict::Correct : Verdict::Incorrect;
}

VerdictLabels read_labels(const std::string& path) {
    VerdictLabels labels;
    for (const auto& line : read_lines(path)) {
        try {
            json j = json::parse(line);
            labels[{j.at("k").get<int>(), j.at("index").get<std::size_t>()}] =
                parse_verdict(j.at("verdict").get<std::string>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Labels, std::string("bad label line: ") + e.what());
        }
    }
    return labels;
}

const std::vector<ReferenceRow>& reference_rows() {
    static const std::vector<ReferenceRow> rows{
        {"1", 0.85, 0.85, 0.08},
        {"2-5", 0.89, 0.91, std::nullopt},
        {"overall", 0.91, 0.91, 0.035},
    };
    return rows;
}

namespace {

std::string pct(double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
    return buf;
}

}  // namespace

std::string EvalReport::to_table() const {
    std::ostringstream out;
    char line[160];
    out << "provider " << provider << ", dataset " << dataset_fingerprint << '\n';
    std::snprintf(line, sizeof line, "%-10s %-8s %-10s %-10s %-10s\n", "k", "queries", "accuracy",
                  "none", "errors");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-10d %-8zu %-10s %-10s %-10s\n", r.k, r.n_queries,
                      pct(r.accuracy).c_str(), pct(r.none_rate).c_str(), pct(r.error_rate).c_str());
        out << line;
    }
    out << "reference (published, not reproducible here):\n";
    for (const auto& r : reference_rows()) {
        std::string acc = r.accuracy_low == r.accuracy_high
                              ? pct(r.accuracy_low)
                              : pct(r.accuracy_low) + "-" + pct(r.accuracy_high);
        std::snprintf(line, sizeof line, "%-10s %-8s %-10s %-10s\n", r.k_label.c_str(), "-",
                      acc.c_str(), r.none_rate ? pct(*r.none_rate).c_str() : "-");
        out << line;
    }
    return out.str();
}

std::string EvalReport::to_jsonl() const {
    std::ostringstream out;
    for (const auto& r : rows) {
        out << json{{"k", r.k},
                    {"n_queries", r.n_queries},
                    {"accuracy", r.accuracy},
                    {"none_rate", r.none_rate},
                    {"error_rate", r.error_rate},
                    {"provider", provider},
                    {"dataset", dataset_fingerprint}}
                   .dump()
            << '\n';
    }
    return out.str();
}

std::string dataset_fingerprint(const std::vector<LabeledExample>& examples) {
    std::uint64_t h = fnv1a64("");
    for (const auto& e : examples) {
        h = splitmix64(h ^ fnv1a64(example_to_json(e).dump()));
    }
    return hex64(h);
}

EvalReport run_k_sweep(const std::vector<LabeledExample>& test_set, const RouterModel& model,
                       const KnowledgeBase& store, const LlmConfig& llm, const SweepOptions& options) {
    if (test_set.empty()) throw Error(ErrorCode::Param, "test set is empty");
    if (options.k_values.empty()) throw Error(ErrorCode::Param, "no k values given");
    for (int k : options.k_values) {
        if (k < 1) throw Error(ErrorCode::Param, "k must be at least 1");
    }
    if (llm.provider != LlmProvider::Mock && !options.labels) {
        throw Error(ErrorCode::Labels, "verdict labels are required for a remote provider");
    }
    const auto start = Clock::now();
    EvalReport report;
    report.provider = std::string(provider_name(llm.provider)) +
                      (llm.provider == LlmProvider::Mock ? ":" + std::string(mock_mode_name(llm.mock_mode))
                                                         : ":" + llm.model_name);
    report.dataset_fingerprint = dataset_fingerprint(test_set);

    const std::size_t workers = std::max<std::size_t>(1, options.parallelism);
    for (int k : options.k_values) {
        std::vector<ExplanationResult> results(test_set.size());
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < test_set.size(); i = next++) {
                const auto& ex = test_set[i];
                ExplainRequest req;
                req.question = {render_sql(ex.spec), ex.pair, ex.result};
                req.k = k;
                results[i] = explain(req, model, store, llm);
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }

        std::vector<Verdict> verdicts;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].status != ExplainStatus::Explained) continue;
            if (options.labels) {
                auto it = options.labels->find({k, i});
                if (it == options.labels->end()) {
                    throw Error(ErrorCode::Labels, "no verdict for k=" + std::to_string(k) +
                                                       " index " + std::to_string(i));
                }
                verdicts.push_back(it->second);
            } else {
                verdicts.push_back(mock_judge(*results[i].explanation, test_set[i].result));
            }
        }
        Score s = score(results, verdicts);
        report.rows.push_back({k, test_set.size(), s.accuracy, s.none_rate, s.error_rate});
    }
    report.seconds = elapsed_ms(start, Clock::now()) / 1000.0;
    return report;
}

Stat warm_stat(const std::vector<double>& samples_ms) {
    if (samples_ms.empty()) return {};
    const std::size_t skip = samples_ms.size() / 10;
    std::vector<double> warm(samples_ms.begin() + static_cast<std::ptrdiff_t>(skip), samples_ms.end());
    Stat s;
    double total = 0.0;
    for (double v : warm) total += v;
    s.mean = total / static_cast<double>(warm.size());
    std::sort(warm.begin(), warm.end());
    // Nearest-rank percentile.
    auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(warm.size())));
    s.p95 = warm[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

std::string TimingReport::to_table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "requests %zu, kb size %zu\n", n_requests, kb_size);
    out << line;
    std::snprintf(line, sizeof line, "%-16s %-12s %-12s %-12s\n", "component", "mean ms", "p95 ms",
                  "budget ms");
    out << line;
    std::snprintf(line, sizeof line, "%-16s %-12.5f %-12.5f %-12s\n", "encode", encode_ms.mean,
                  encode_ms.p95, "1.0");
    out << line;
    std::snprintf(line, sizeof line, "%-16s %-12.5f %-12.5f %-12s\n", "search", search_ms.mean,
                  search_ms.p95, "0.1 (1.0 hard)");
    out << line;
    if (llm_think_ms) {
        std::snprintf(line, sizeof line, "%-16s %-12.3f %-12s %-12s\n", "llm think", *llm_think_ms,
                      "-", "~10000 ref");
        out << line;
    }
    if (llm_generate_ms) {
        std::snprintf(line, sizeof line, "%-16s %-12.3f %-12s %-12s\n", "llm generate",
                      *llm_generate_ms, "-", "-");
        out << line;
    }
    return out.str();
}

TimingReport measure_timings(const RouterModel& model, const KnowledgeBase& store,
                             const std::vector<PlanPair>& pairs, std::size_t n_requests,
                             const std::vector<ExplanationResult>& recent) {
    if (pairs.empty()) throw Error(ErrorCode::Param, "no plan pairs to time");
    if (n_requests == 0) throw Error(ErrorCode::Param, "n_requests must be positive");
    std::vector<double> encode, search;
    encode.reserve(n_requests);
    search.reserve(n_requests);
    double sink = 0.0;
    for (std::size_t i = 0; i < n_requests; ++i) {
        const PlanPair& pair = pairs[i % pairs.size()];
        auto t0 = Clock::now();
        PairEmbedding key = embed_pair(model, pair);
        auto t1 = Clock::now();
        auto hits = store.top_k(key, 2);
        auto t2 = Clock::now();
        if (!hits.empty()) sink += hits.front().similarity;
        encode.push_back(elapsed_ms(t0, t1));
        search.push_back(elapsed_ms(t1, t2));
    }
    (void)sink;
    TimingReport r;
    r.encode_ms = warm_stat(encode);
    r.search_ms = warm_stat(search);
    r.kb_size = store.size();
    r.n_requests = n_requests;
    double think = 0.0, gen = 0.0;
    std::size_t n = 0;
    for (const auto& res : recent) {
        if (res.status == ExplainStatus::Error) continue;
        think += res.timings.llm_think_ms;
        gen += res.timings.llm_generate_ms;
        ++n;
    }
    if (n > 0) {
        r.llm_think_ms = think / static_cast<double>(n);
        r.llm_generate_ms = gen / static_cast<double>(n);
    }
    return r;
}

}  // namespace htapx
