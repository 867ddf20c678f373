#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "remex/orchestrator.hpp"

namespace remex {

struct EvalItem {
    Query query;
    std::string gold_answer;
    std::optional<ExpertKind> gold_modality;
};

/// Line-delimited {query_id, query, gold_answer, optional gold_modality}.
std::vector<EvalItem> load_eval_dataset(const std::filesystem::path& path);

struct EvalQueryRecord {
    std::string query_id;
    double f1_recall = 0.0;
    double accuracy = 0.0;
    int steps_used = 0;  // retrieval steps
    std::vector<ExpertKind> experts_used;
    std::string error_note;
};

/// Per-step action counts; counts at step t sum to the number of
/// trajectories with at least t recorded steps.
struct ExpertStepHistogram {
    struct Row {
        std::int64_t text = 0;
        std::int64_t image = 0;
        std::int64_t table = 0;
        std::int64_t null_action = 0;

        std::int64_t total() const { return text + image + table + null_action; }
    };
    std::vector<Row> rows;  // index 0 = step 1

    /// Plot-ready TSV: step, text, image, table, null.
    std::string to_table() const;
};

struct EvalReport {
    std::string dataset_id;
    std::vector<EvalQueryRecord> records;
    double mean_f1_recall = 0.0;
    double mean_accuracy = 0.0;
    double mean_steps = 0.0;
    ExpertStepHistogram histogram;
};

ExpertStepHistogram expert_distribution(const std::vector<Trajectory>& trajectories);

/// Builds a fresh policy per query so episodes stay independent and
/// deterministic under concurrency.
using PolicyFactory = std::function<std::unique_ptr<Policy>(std::size_t query_index)>;

/// Runs one episode per dataset item, scores answers with f1-recall and
/// accuracy, and aggregates. A failed episode scores 0 and carries an error
/// note; it never aborts the batch. Aggregation sums records in query-id
/// order, so permuting the dataset leaves the aggregates bit-identical.
EvalReport evaluate(const std::vector<EvalItem>& dataset, const PolicyFactory& policies,
                    const ExpertPool& experts, const EpisodeConfig& config, int jobs = 1,
                    const PromptTemplate& tmpl = default_prompt_template(),
                    const std::string& dataset_id = "dataset");

/// Writes records.jsonl (one record per query) and summary.json into `dir`.
void save_eval_report(const EvalReport& report, const std::filesystem::path& dir);
EvalReport load_eval_report(const std::filesystem::path& dir);

/// Recomputes the aggregate block from the per-query records.
void recompute_aggregates(EvalReport& report);

}  // namespace remex
