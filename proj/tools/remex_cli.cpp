#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "remex/config.hpp"
#include "remex/eval_harness.hpp"
#include "remex/expert_pool.hpp"
#include "remex/grpo.hpp"
#include "remex/llm_client.hpp"
#include "remex/orchestrator.hpp"
#include "remex/rewards.hpp"
#include "remex/text.hpp"
#include "remex/toy_policy.hpp"
#include "remex/trajectory_synthesis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::int64_t seed = -1;  // -1: keep the config/default seeds

    remex::EngineConfig load() const {
        remex::EngineConfig config;
        if (!config_path.empty()) {
            config = remex::load_engine_config(config_path);
        }
        if (seed >= 0) {
            config.episode.seed = static_cast<std::uint64_t>(seed);
            config.trainer.seed = static_cast<std::uint64_t>(seed);
        }
        return config;
    }
};

std::vector<std::string> load_script(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw remex::ConfigError("cannot open script file: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw remex::ConfigError("invalid script file " + path.string() + ": " + e.what());
    }
    if (!j.is_array()) {
        throw remex::ConfigError("script file must be a JSON array of emissions");
    }
    return j.get<std::vector<std::string>>();
}

struct PolicyOptions {
    std::string name = "scripted";
    std::string script_path;
    std::string policy_file;
};

void add_policy_options(CLI::App* cmd, PolicyOptions& options) {
    cmd->add_option("--policy", options.name, "Policy backend: scripted, toy, or remote")
        ->check(CLI::IsMember({"scripted", "toy", "remote"}));
    cmd->add_option("--script", options.script_path,
                    "JSON array of emissions for the scripted policy");
    cmd->add_option("--policy-file", options.policy_file, "Toy policy file (from `remex train`)");
}

/// Builds one fresh policy per episode so runs stay deterministic.
remex::PolicyFactory make_policy_factory(const PolicyOptions& options,
                                         const remex::EngineConfig& config,
                                         std::shared_ptr<remex::ToyRoutingPolicy>& toy_policy) {
    if (options.name == "scripted") {
        if (options.script_path.empty()) {
            throw remex::ConfigError("--policy scripted needs --script <file>");
        }
        auto script = std::make_shared<std::vector<std::string>>(load_script(options.script_path));
        return [script](std::size_t) -> std::unique_ptr<remex::Policy> {
            return std::make_unique<remex::ScriptedPolicy>(*script);
        };
    }
    if (options.name == "toy") {
        if (options.policy_file.empty()) {
            throw remex::ConfigError("--policy toy needs --policy-file <file>");
        }
        toy_policy =
            std::make_shared<remex::ToyRoutingPolicy>(remex::load_toy_policy(options.policy_file));
        const std::uint64_t base_seed = config.episode.seed;
        const double temperature = config.episode.temperature;
        return [toy_policy, base_seed, temperature](std::size_t index) {
            return std::unique_ptr<remex::Policy>(
                new remex::ToyPolicyAgent(*toy_policy, temperature, base_seed + index));
        };
    }
    auto remote = std::make_shared<remex::RemotePolicy>(config.llm);
    struct Forwarder : remex::Policy {
        explicit Forwarder(std::shared_ptr<remex::RemotePolicy> inner) : inner_(std::move(inner)) {}
        remex::PolicyResponse complete(const remex::PolicyRequest& request) override {
            return inner_->complete(request);
        }
        std::shared_ptr<remex::RemotePolicy> inner_;
    };
    return [remote](std::size_t) -> std::unique_ptr<remex::Policy> {
        return std::make_unique<Forwarder>(remote);
    };
}

remex::PromptTemplate prompt_template(const remex::EngineConfig& config) {
    remex::PromptTemplate tmpl = remex::default_prompt_template();
    tmpl.document_char_budget = config.document_char_budget;
    return tmpl;
}

int cmd_ingest(const std::string& kind_name, const fs::path& in, const fs::path& out) {
    const auto kind = remex::parse_expert_kind(kind_name);
    const auto corpus = remex::ingest_corpus(in, kind);
    const auto index = remex::build_index(corpus);
    remex::save_index(index, out);
    std::cout << "indexed " << index.doc_count << " " << kind_name << " documents ("
              << index.postings.size() << " terms, avg length " << index.avg_doc_length
              << ") -> " << out.string() << "\n";
    return 0;
}

int cmd_index(const fs::path& corpus_dir, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    for (remex::ExpertKind kind : remex::kAllExpertKinds) {
        const auto in = corpus_dir / (remex::to_string(kind) + ".jsonl");
        if (!fs::exists(in)) {
            throw remex::ConfigError("missing corpus file: " + in.string());
        }
        cmd_ingest(remex::to_string(kind), in, out_dir / remex::index_file_name(kind));
    }
    return 0;
}

void print_trajectory(const remex::Trajectory& trajectory) {
    std::cout << "query: " << trajectory.query << "\n";
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& step = trajectory.steps[i];
        std::cout << "step " << (i + 1) << (step.format_ok ? "" : " [malformed]") << ": ";
        if (const auto* search = std::get_if<remex::SearchAction>(&step.action)) {
            std::cout << "search " << remex::to_string(search->expert) << " \"" << search->query
                      << "\" -> " << step.observation.documents.size() << " documents";
            if (!step.observation.intermediate_answer.empty()) {
                std::cout << "; intermediate: " << step.observation.intermediate_answer;
            }
        } else if (std::holds_alternative<remex::NoRetrievalAction>(step.action)) {
            std::cout << "NULL (knowledge sufficient)";
        }
        std::cout << "\n";
    }
    std::cout << "answer: " << trajectory.answer << "\n";
}

int cmd_run(const GlobalOptions& global, const PolicyOptions& policy_options,
            const std::string& query_text, const std::string& query_id, const fs::path& indexes,
            int max_steps, int top_k, const fs::path& out) {
    auto config = global.load();
    if (max_steps > 0) {
        config.episode.max_steps = max_steps;
    }
    if (top_k > 0) {
        config.episode.top_k = top_k;
    }
    const auto experts = remex::ExpertPool::load_directory(indexes);
    std::shared_ptr<remex::ToyRoutingPolicy> toy;
    auto factory = make_policy_factory(policy_options, config, toy);
    auto policy = factory(0);
    const auto trajectory = remex::run_episode(*policy, experts, {query_id, query_text},
                                               config.episode, prompt_template(config));
    print_trajectory(trajectory);
    if (!out.empty()) {
        remex::save_trajectories({trajectory}, out);
        std::cout << "saved trajectory -> " << out.string() << "\n";
    }
    return 0;
}

int cmd_synth(const GlobalOptions& global, const PolicyOptions& policy_options,
              const fs::path& queries_path, int n, const fs::path& indexes, const fs::path& out,
              bool keep_all) {
    const auto config = global.load();
    const auto experts = remex::ExpertPool::load_directory(indexes);
    const auto items = remex::load_eval_dataset(queries_path);
    std::vector<std::pair<remex::Query, std::string>> queries;
    queries.reserve(items.size());
    for (const auto& item : items) {
        queries.emplace_back(item.query, item.gold_answer);
    }
    std::shared_ptr<remex::ToyRoutingPolicy> toy;
    auto factory = make_policy_factory(policy_options, config, toy);
    auto generator = factory(0);

    remex::SynthesisOptions options;
    options.n_per_query = n;
    options.keep_all_survivors = keep_all;
    options.provenance = policy_options.name;
    const auto summary = remex::build_dataset(queries, *generator, experts, config.episode,
                                              options, out, prompt_template(config));
    std::cout << "accepted " << summary.accepted << "/" << summary.queries
              << " golden trajectories (rate " << summary.acceptance_rate << ") -> "
              << out.string() << "\n";
    for (const auto& [kind, count] : summary.routing_distribution) {
        std::cout << "  " << remex::to_string(kind) << " steps: " << count << "\n";
    }
    for (const auto& error : summary.errors) {
        std::cerr << "  generation error: " << error << "\n";
    }
    return 0;
}

/// Vocabulary and emission templates harvested from the golden dataset, plus
/// the prompt marker words the toy router needs to tell prompt kinds apart.
remex::ToyRoutingPolicy policy_from_dataset(const std::vector<remex::GoldenTrajectory>& dataset) {
    std::set<std::string> vocabulary;
    std::set<std::string> templates;
    for (const auto& golden : dataset) {
        for (const auto& token : remex::tokenize(golden.trajectory.query)) {
            vocabulary.insert(token);
        }
        if (golden.trajectory.gold_answer) {
            templates.insert(*golden.trajectory.gold_answer);
            for (const auto& token : remex::tokenize(*golden.trajectory.gold_answer)) {
                vocabulary.insert(token);
            }
        }
        for (const auto& step : golden.trajectory.steps) {
            if (const auto* search = std::get_if<remex::SearchAction>(&step.action)) {
                templates.insert(search->query);
                for (const auto& token : remex::tokenize(search->query)) {
                    vocabulary.insert(token);
                }
            }
            if (!step.observation.intermediate_answer.empty()) {
                templates.insert(step.observation.intermediate_answer);
                for (const auto& token :
                     remex::tokenize(step.observation.intermediate_answer)) {
                    vocabulary.insert(token);
                }
            }
        }
    }
    vocabulary.insert("decide");
    vocabulary.insert("summarize");
    vocabulary.insert("give");
    return remex::ToyRoutingPolicy(
        std::vector<std::string>(vocabulary.begin(), vocabulary.end()),
        std::vector<std::string>(templates.begin(), templates.end()));
}

int cmd_train(const GlobalOptions& global, const std::string& policy_name,
              const fs::path& dataset_path, const fs::path& indexes, const fs::path& out_dir,
              const std::string& init_policy_file, int iterations) {
    if (policy_name == "remote") {
        throw remex::ConfigError(
            "remote policies cannot be trained: the trainer needs token log-probabilities "
            "under both the old and the current policy; use --policy toy");
    }
    if (policy_name != "toy") {
        throw remex::ConfigError("train supports --policy toy only");
    }
    auto config = global.load();
    if (iterations > 0) {
        config.trainer.iterations = iterations;
    }
    const auto experts = remex::ExpertPool::load_directory(indexes);
    const auto dataset = remex::load_golden_dataset(dataset_path, &experts);
    if (dataset.empty()) {
        throw remex::ConfigError("golden dataset is empty: " + dataset_path.string());
    }
    auto policy = init_policy_file.empty() ? policy_from_dataset(dataset)
                                           : remex::load_toy_policy(init_policy_file);
    const auto result =
        remex::train(policy, dataset, config.trainer, config.reward, prompt_template(config));

    fs::create_directories(out_dir);
    remex::save_toy_policy(policy, out_dir / "policy.json");
    remex::save_metrics(result, out_dir / "metrics.jsonl");
    if (!result.iterations.empty()) {
        const auto& last = result.iterations.back();
        std::cout << "trained " << result.iterations.size() << " iterations; final mean reward "
                  << last.mean_reward << ", route accuracy " << last.route_accuracy << "\n";
    }
    std::cout << "policy -> " << (out_dir / "policy.json").string() << "\n";
    std::cout << "metrics -> " << (out_dir / "metrics.jsonl").string() << "\n";
    return 0;
}

int cmd_eval(const GlobalOptions& global, const PolicyOptions& policy_options,
             const fs::path& dataset_path, const fs::path& indexes, const fs::path& out_dir,
             int jobs) {
    const auto config = global.load();
    const auto experts = remex::ExpertPool::load_directory(indexes);
    const auto dataset = remex::load_eval_dataset(dataset_path);
    std::shared_ptr<remex::ToyRoutingPolicy> toy;
    auto factory = make_policy_factory(policy_options, config, toy);
    const auto report = remex::evaluate(dataset, factory, experts, config.episode, jobs,
                                        prompt_template(config), dataset_path.stem().string());
    std::cout << "queries: " << report.records.size() << "\n"
              << "mean f1-recall: " << report.mean_f1_recall << "\n"
              << "mean accuracy: " << report.mean_accuracy << "\n"
              << "mean retrieval steps: " << report.mean_steps << "\n"
              << "expert distribution by step:\n"
              << report.histogram.to_table();
    if (!out_dir.empty()) {
        remex::save_eval_report(report, out_dir);
        std::cout << "report -> " << out_dir.string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-retrieval-experts engine: modality-routed retrieval episodes, "
                 "stepwise reward scoring, and group-relative policy training"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "Engine config file (JSON)");
    app.add_option("--seed", global.seed, "Override the episode and trainer seeds");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Build one expert index from a corpus file");
    std::string ingest_kind;
    fs::path ingest_in;
    fs::path ingest_out;
    ingest->add_option("--kind", ingest_kind, "text, image, or table")->required();
    ingest->add_option("--in", ingest_in, "Line-delimited corpus file")->required();
    ingest->add_option("--out", ingest_out, "Index file to write")->required();

    // index
    auto* index = app.add_subcommand("index", "Build all three expert indexes from a directory");
    fs::path index_corpus_dir;
    fs::path index_out_dir;
    index->add_option("--corpus-dir", index_corpus_dir,
                      "Directory with text.jsonl, image.jsonl, table.jsonl")
        ->required();
    index->add_option("--out", index_out_dir, "Directory for the index files")->required();

    // run
    auto* run = app.add_subcommand("run", "Run one reasoning episode for a query");
    PolicyOptions run_policy;
    std::string run_query;
    std::string run_query_id = "query";
    fs::path run_indexes;
    fs::path run_out;
    int run_max_steps = 0;
    int run_top_k = 0;
    run->add_option("--query", run_query, "The question")->required();
    run->add_option("--query-id", run_query_id, "Identifier stored in the trajectory");
    run->add_option("--indexes", run_indexes, "Directory with the three index files")->required();
    run->add_option("--max-steps", run_max_steps, "Step budget (default 3)");
    run->add_option("--top-k", run_top_k, "Documents per retrieval (default 3)");
    run->add_option("--out", run_out, "Write the trajectory to this file");
    add_policy_options(run, run_policy);

    // synth
    auto* synth = app.add_subcommand("synth", "Sample candidates and dual-filter golden "
                                              "trajectories");
    PolicyOptions synth_policy;
    fs::path synth_queries;
    fs::path synth_indexes;
    fs::path synth_out;
    int synth_n = 8;
    bool synth_keep_all = false;
    synth->add_option("--queries", synth_queries, "Dataset file with queries and gold answers")
        ->required();
    synth->add_option("--n", synth_n, "Candidates per query (default 8)");
    synth->add_option("--indexes", synth_indexes, "Directory with the three index files")
        ->required();
    synth->add_option("--out", synth_out, "Golden dataset file to write")->required();
    synth->add_flag("--keep-all", synth_keep_all, "Keep every survivor, not just the best");
    add_policy_options(synth, synth_policy);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the toy routing policy on a golden "
                                                  "dataset");
    std::string train_policy_name = "toy";
    fs::path train_dataset;
    fs::path train_indexes;
    fs::path train_out;
    std::string train_init;
    int train_iterations = 0;
    train_cmd->add_option("--policy", train_policy_name, "Trainable policy backend (toy)");
    train_cmd->add_option("--dataset", train_dataset, "Golden dataset (from `remex synth`)")
        ->required();
    train_cmd->add_option("--indexes", train_indexes, "Directory with the three index files")
        ->required();
    train_cmd->add_option("--out", train_out, "Output directory for policy.json and "
                                              "metrics.jsonl")
        ->required();
    train_cmd->add_option("--init", train_init, "Initial toy policy file");
    train_cmd->add_option("--iterations", train_iterations, "Override trainer iterations");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy over a dataset");
    PolicyOptions eval_policy;
    fs::path eval_dataset;
    fs::path eval_indexes;
    fs::path eval_out;
    int eval_jobs = 1;
    eval_cmd->add_option("--dataset", eval_dataset, "Dataset file")->required();
    eval_cmd->add_option("--indexes", eval_indexes, "Directory with the three index files")
        ->required();
    eval_cmd->add_option("--out", eval_out, "Directory for records.jsonl and summary.json");
    eval_cmd->add_option("--jobs", eval_jobs, "Concurrent episodes (default 1)");
    add_policy_options(eval_cmd, eval_policy);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            return cmd_ingest(ingest_kind, ingest_in, ingest_out);
        }
        if (index->parsed()) {
            return cmd_index(index_corpus_dir, index_out_dir);
        }
        if (run->parsed()) {
            return cmd_run(global, run_policy, run_query, run_query_id, run_indexes,
                           run_max_steps, run_top_k, run_out);
        }
        if (synth->parsed()) {
            return cmd_synth(global, synth_policy, synth_queries, synth_n, synth_indexes,
                             synth_out, synth_keep_all);
        }
        if (train_cmd->parsed()) {
            return cmd_train(global, train_policy_name, train_dataset, train_indexes, train_out,
                             train_init, train_iterations);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(global, eval_policy, eval_dataset, eval_indexes, eval_out, eval_jobs);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
