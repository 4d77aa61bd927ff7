// Command-line front end: dataset generation, training, KB ingest, explain,
// evaluation and the HTTP service.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "htapx/error.hpp"
#include "htapx/eval.hpp"
#include "htapx/knowledge_base.hpp"
#include "htapx/llm.hpp"
#include "htapx/pipeline.hpp"
#include "htapx/router.hpp"
#include "htapx/service.hpp"
#include "htapx/util.hpp"
#include "htapx/workload.hpp"

namespace fs = std::filesystem;
using namespace htapx;
using nlohmann::json;

namespace {

struct LlmFlags {
    std::string provider = "mock";
    std::string mock_mode = "echo";
    std::string fixtures;
    std::size_t none_below = 2;
    std::string endpoint;
    std::string model;
    int timeout_ms = 60000;
    int max_tokens = 1024;

    void add(CLI::App* app) {
        app->add_option("--llm", provider, "mock or remote")->check(CLI::IsMember({"mock", "remote"}));
        app->add_option("--mock-mode", mock_mode, "echo, fixture, none or none-below")
            ->check(CLI::IsMember({"echo", "fixture", "none", "none-below"}));
        app->add_option("--fixtures", fixtures, "fingerprint->answer JSON for --mock-mode fixture");
        app->add_option("--none-below", none_below, "knowledge blocks needed before the mock answers");
        app->add_option("--endpoint", endpoint, "chat-completion URL (default from HTAPX_LLM_ENDPOINT)");
        app->add_option("--llm-model", model, "remote model name (default from HTAPX_LLM_MODEL)");
        app->add_option("--timeout-ms", timeout_ms, "remote request timeout");
        app->add_option("--max-tokens", max_tokens, "completion token limit");
    }

    LlmConfig build() const {
        LlmConfig c;
        if (provider == "remote") {
            c = LlmConfig::remote_from_env(endpoint, model);
        } else {
            c = LlmConfig::mock(parse_mock_mode(mock_mode));
            c.none_below = none_below;
            if (!fixtures.empty()) c.fixtures = load_fixtures(fixtures);
        }
        c.timeout_ms = timeout_ms;
        c.max_output_tokens = max_tokens;
        c.validate();
        return c;
    }
};

std::vector<int> parse_k_values(const std::string& text) {
    std::vector<int> ks;
    auto dots = text.find("..");
    try {
        if (dots != std::string::npos) {
            int lo = std::stoi(text.substr(0, dots));
            int hi = std::stoi(text.substr(dots + 2));
            for (int k = lo; k <= hi; ++k) ks.push_back(k);
        } else {
            std::stringstream ss(text);
            std::string part;
            while (std::getline(ss, part, ',')) ks.push_back(std::stoi(part));
        }
    } catch (const std::exception&) {
        throw Error(ErrorCode::Param, "bad k range '" + text + "'");
    }
    if (ks.empty()) throw Error(ErrorCode::Param, "empty k range");
    for (int k : ks) {
        if (k < 1) throw Error(ErrorCode::Param, "k must be at least 1");
    }
    return ks;
}

/// Accepts {query_text?, plan_pair, execution_result?} or a bare plan pair.
Question load_question(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Syntax, path + ": " + e.what());
    }
    Question q;
    const json& pair = j.contains("plan_pair") ? j.at("plan_pair") : j;
    q.pair = pair_from_json(pair);
    q.pair.validate();
    if (j.contains("query_text") && j.at("query_text").is_string()) {
        q.query_text = j.at("query_text").get<std::string>();
    } else if (q.pair.query_text) {
        q.query_text = *q.pair.query_text;
    }
    if (j.contains("execution_result") && !j.at("execution_result").is_null()) {
        q.result = result_from_json(j.at("execution_result"));
    }
    return q;
}

std::vector<LabeledExample> load_examples(const std::string& path) {
    auto examples = read_dataset_file(path);
    if (examples.empty()) throw Error(ErrorCode::Param, path + " holds no examples");
    return examples;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir + ": " + ec.message());
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explain why one HTAP engine runs a query faster than the other."};
    app.require_subcommand(1);
    app.set_version_flag("--version", "htapx 1.0");

    // gen-workload
    auto* gen = app.add_subcommand("gen-workload", "Generate labeled train, KB seed and test sets");
    std::string gen_out = "data";
    std::size_t n_train = 400, n_kb = 20, n_test = 200;
    std::uint64_t gen_seed = 1;
    std::string gen_calibration;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--n-train", n_train, "training queries");
    gen->add_option("--n-kb", n_kb, "KB seed queries (drawn from the training set)");
    gen->add_option("--n-test", n_test, "test queries");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--calibration", gen_calibration, "latency-oracle constants (JSON)");

    // train-router
    auto* train = app.add_subcommand("train-router", "Train the tree-convolution router");
    std::string train_path, heldout_path, model_out = "router.bin", report_out;
    Hyperparams hp;
    train->add_option("--train", train_path, "training set (JSONL)")->required();
    train->add_option("--heldout", heldout_path, "held-out set (JSONL)");
    train->add_option("--out", model_out, "model file");
    train->add_option("--epochs", hp.epochs, "epochs");
    train->add_option("--lr", hp.learning_rate, "learning rate");
    train->add_option("--batch", hp.batch_size, "mini-batch size");
    train->add_option("--init-scale", hp.init_scale, "initial weight scale");
    train->add_option("--estimate-copies", hp.estimate_copies, "augmented copies with shrunken TP estimates");
    train->add_option("--estimate-decades", hp.estimate_decades, "largest shrink, in powers of ten");
    train->add_option("--seed", hp.seed, "random seed");
    train->add_option("--report", report_out, "write the training report as JSON");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Add entries to a knowledge base file");
    std::string ingest_kb, ingest_entries, ingest_model;
    ingest->add_option("--kb", ingest_kb, "knowledge base file (created when missing)")->required();
    ingest->add_option("--entries", ingest_entries, "entries (JSONL)")->required();
    ingest->add_option("--model", ingest_model, "router model used to key the entries")->required();

    // explain
    auto* exp = app.add_subcommand("explain", "Explain one plan pair");
    std::string exp_pair, exp_kb, exp_model, exp_context;
    int exp_k = 2;
    bool exp_baseline = false, exp_json = false, exp_show_prompt = false;
    LlmFlags exp_llm;
    exp->add_option("--pair", exp_pair, "question file")->required();
    exp->add_option("--kb", exp_kb, "knowledge base file")->required();
    exp->add_option("--model", exp_model, "router model")->required();
    exp->add_option("--k", exp_k, "knowledge entries to retrieve");
    exp->add_option("--context", exp_context, "additional user context");
    exp->add_flag("--baseline", exp_baseline, "no retrieval, baseline prompt");
    exp->add_flag("--json", exp_json, "print the full result as JSON");
    exp->add_flag("--show-prompt", exp_show_prompt, "print the prompt to standard error");
    exp_llm.add(exp);

    // embed
    auto* emb = app.add_subcommand("embed", "Print the pair embedding and the router's prediction");
    std::string emb_pair, emb_model;
    emb->add_option("--pair", emb_pair, "question file")->required();
    emb->add_option("--model", emb_model, "router model")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluation harness");
    eval->require_subcommand(1);
    auto* sweep = eval->add_subcommand("k-sweep", "Accuracy and None rate across k");
    std::string sw_test, sw_kb, sw_model, sw_k = "1..5", sw_labels, sw_jsonl;
    std::size_t sw_parallel = 1;
    LlmFlags sw_llm;
    sweep->add_option("--test", sw_test, "test set (JSONL)")->required();
    sweep->add_option("--kb", sw_kb, "knowledge base file")->required();
    sweep->add_option("--model", sw_model, "router model")->required();
    sweep->add_option("--k", sw_k, "k values, e.g. 1..5 or 1,2,4");
    sweep->add_option("--labels", sw_labels, "verdict labels (JSONL)");
    sweep->add_option("--parallel", sw_parallel, "concurrent explain calls");
    sweep->add_option("--jsonl", sw_jsonl, "also write machine-readable rows here");
    sw_llm.add(sweep);

    auto* timings = eval->add_subcommand("timings", "Encode and search latency");
    std::string tm_test, tm_kb, tm_model;
    std::size_t tm_n = 1000;
    timings->add_option("--test", tm_test, "plan pairs to cycle through (JSONL)")->required();
    timings->add_option("--kb", tm_kb, "knowledge base file")->required();
    timings->add_option("--model", tm_model, "router model")->required();
    timings->add_option("--n", tm_n, "requests");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    ServiceConfig svc;
    double ttl_hours = 24.0;
    LlmFlags sv_llm;
    serve->add_option("--model", svc.model_path, "router model")->required();
    serve->add_option("--kb", svc.kb_path, "knowledge base file")->required();
    serve->add_option("--host", svc.host, "listen address");
    serve->add_option("--port", svc.port, "listen port");
    serve->add_option("--templates", svc.templates_dir, "prompt template directory");
    serve->add_option("--k", svc.default_k, "default retrieval depth");
    serve->add_option("--parallelism", svc.parallelism, "worker threads");
    serve->add_option("--ttl-hours", ttl_hours, "result cache lifetime");
    sv_llm.add(serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const SchemaCatalog catalog = SchemaCatalog::tpch();

        if (gen->parsed()) {
            Calibration cal = gen_calibration.empty() ? Calibration{} : Calibration::load(gen_calibration);
            Dataset d = build_dataset(catalog, n_train, n_kb, n_test, gen_seed, cal);
            ensure_dir(gen_out);
            write_dataset_file((fs::path(gen_out) / "train.jsonl").string(), d.train);
            write_dataset_file((fs::path(gen_out) / "test.jsonl").string(), d.test);
            std::vector<KnowledgeEntry> seeds;
            for (const auto& ex : d.kb) seeds.push_back(seed_entry(ex, catalog));
            write_entries_file((fs::path(gen_out) / ("seed" + std::to_string(d.kb.size()) + ".jsonl")).string(), seeds);
            std::printf("train %zu (AP wins %.1f%%), kb seeds %zu, test %zu (AP wins %.1f%%) -> %s\n",
                        d.train.size(), 100.0 * ap_win_fraction(d.train), d.kb.size(), d.test.size(),
                        100.0 * ap_win_fraction(d.test), gen_out.c_str());
            return 0;
        }

        if (train->parsed()) {
            auto train_set = load_examples(train_path);
            std::vector<LabeledExample> heldout;
            if (!heldout_path.empty()) heldout = load_examples(heldout_path);
            TrainResult r = train_router(train_set, heldout, hp, catalog);
            save_model(r.model, model_out);
            const auto bytes = fs::file_size(model_out);
            std::printf("loss %.4f -> %.4f, train accuracy %.3f", r.report.initial_loss,
                        r.report.final_loss, r.report.train_accuracy);
            if (!r.report.heldout_accuracy.empty()) {
                std::printf(", held-out accuracy %.3f", r.report.heldout_accuracy.back());
            }
            std::printf(", %.1f s, %ju bytes -> %s\n", r.report.seconds, static_cast<std::uintmax_t>(bytes),
                        model_out.c_str());
            if (!report_out.empty()) {
                json rep{{"epoch_loss", r.report.epoch_loss},
                         {"heldout_accuracy", r.report.heldout_accuracy},
                         {"initial_loss", r.report.initial_loss},
                         {"final_loss", r.report.final_loss},
                         {"train_accuracy", r.report.train_accuracy},
                         {"seconds", r.report.seconds},
                         {"model_bytes", bytes},
                         {"model_version", r.model.fingerprint()}};
                write_file_atomic(report_out, rep.dump(2) + "\n");
            }
            return 0;
        }

        if (ingest->parsed()) {
            RouterModel model = load_model(ingest_model);
            KnowledgeBase kb = fs::exists(ingest_kb) ? KnowledgeBase::load(ingest_kb) : KnowledgeBase{};
            std::size_t added = 0;
            for (auto& e : read_entries_file(ingest_entries)) {
                e.plan_details.validate();
                e.key = embed_pair(model, e.plan_details);
                kb.insert(std::move(e));
                ++added;
            }
            kb.persist(ingest_kb);
            std::printf("ingested %zu entries, KB size %zu\n", added, kb.size());
            return 0;
        }

        if (exp->parsed()) {
            LlmConfig llm = exp_llm.build();
            RouterModel model = load_model(exp_model);
            KnowledgeBase kb = KnowledgeBase::load(exp_kb);
            ExplainRequest req;
            req.question = load_question(exp_pair);
            req.k = exp_k;
            req.baseline = exp_baseline;
            if (!exp_context.empty()) req.user_context = exp_context;
            ExplanationResult r = htapx::explain(req, model, kb, llm);
            if (exp_show_prompt) std::cerr << r.prompt.render() << "\n";
            if (exp_json) {
                std::cout << explanation_to_json(r).dump(2) << "\n";
            } else if (r.status == ExplainStatus::Explained) {
                std::cout << *r.explanation << "\n";
            } else if (r.status == ExplainStatus::NoneResponse) {
                std::cout << "None\n";
            }
            if (r.status == ExplainStatus::Error) {
                std::cerr << "error: " << r.error.value_or("E_LLM") << "\n";
                return 1;
            }
            return 0;
        }

        if (emb->parsed()) {
            RouterModel model = load_model(emb_model);
            Question q = load_question(emb_pair);
            Prediction p = predict(model, q.pair);
            json out{{"embedding", embed_pair(model, q.pair)},
                     {"winner", engine_name(p.winner)},
                     {"probabilities", p.probabilities},
                     {"model_version", model.fingerprint()}};
            std::cout << out.dump(2) << "\n";
            return 0;
        }

        if (sweep->parsed()) {
            LlmConfig llm = sw_llm.build();
            RouterModel model = load_model(sw_model);
            KnowledgeBase kb = KnowledgeBase::load(sw_kb);
            SweepOptions opt;
            opt.k_values = parse_k_values(sw_k);
            opt.parallelism = sw_parallel;
            if (!sw_labels.empty()) opt.labels = read_labels(sw_labels);
            EvalReport rep = run_k_sweep(load_examples(sw_test), model, kb, llm, opt);
            std::cout << rep.to_table();
            std::printf("%.2f s\n", rep.seconds);
            if (!sw_jsonl.empty()) write_file_atomic(sw_jsonl, rep.to_jsonl());
            return 0;
        }

        if (timings->parsed()) {
            RouterModel model = load_model(tm_model);
            KnowledgeBase kb = KnowledgeBase::load(tm_kb);
            std::vector<PlanPair> pairs;
            for (const auto& ex : load_examples(tm_test)) pairs.push_back(ex.pair);
            std::cout << measure_timings(model, kb, pairs, tm_n).to_table();
            return 0;
        }

        if (serve->parsed()) {
            svc.llm = sv_llm.build();
            if (!(ttl_hours > 0)) throw Error(ErrorCode::Param, "--ttl-hours must be positive");
            svc.result_ttl = std::chrono::seconds(static_cast<long long>(ttl_hours * 3600));
            auto service = Service::load(svc);
            service->start();
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::printf("listening on http://%s:%d (KB %zu entries)\n", svc.host.c_str(), service->port(),
                        service->kb().size());
            std::fflush(stdout);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            service->stop();
            std::printf("stopped; KB written to %s\n", svc.kb_path.c_str());
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
