#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "remex/orchestrator.hpp"
#include "remex/trajectory_types.hpp"

namespace remex {

struct SampleResult {
    std::vector<Trajectory> candidates;
    std::vector<std::string> errors;  // one entry per failed episode
};

/// Runs n independent episodes with the generator at temperature 1.0 and
/// attaches the gold answer to each trajectory. Transport failures leave a
/// partial candidate list plus an error report.
SampleResult sample_candidates(Policy& generator, const ExpertPool& experts, const Query& query,
                               const std::string& gold_answer, int n, const EpisodeConfig& config,
                               const PromptTemplate& tmpl = default_prompt_template());

/// The dual filter: (1) the final answer matches the gold answer under the
/// accuracy normalization, and (2) every step is well-formed and every search
/// step retrieved at least one document. Among survivors the shortest
/// trajectory wins; ties break on the highest mean intermediate f1-recall
/// against the gold answer, then on candidate order. A trailing NULL step is
/// dropped from the accepted trajectory so that every golden step carries a
/// search action and an observation.
std::optional<GoldenTrajectory> dual_filter(const std::vector<Trajectory>& candidates,
                                            const std::string& provenance = "");

/// Indices of all candidates passing both filter criteria, in input order.
std::vector<std::size_t> filter_survivors(const std::vector<Trajectory>& candidates);

/// Re-checks the golden-trajectory invariants from scratch; returns one
/// message per violation (empty means valid).
std::vector<std::string> validate_golden(const GoldenTrajectory& golden);

struct DatasetSummary {
    int queries = 0;
    int accepted = 0;
    double acceptance_rate = 0.0;
    std::map<ExpertKind, int> routing_distribution;  // steps per modality over accepted goldens
    std::vector<std::string> errors;
};

struct SynthesisOptions {
    int n_per_query = 8;
    bool keep_all_survivors = false;  // default: one golden per query
    std::string provenance;
};

/// Generates candidates for every query, dual-filters them, and appends the
/// accepted golden trajectories to `out` as line-delimited records. The
/// output file is opened before any generation so an unwritable path fails
/// fast.
DatasetSummary build_dataset(const std::vector<std::pair<Query, std::string>>& queries,
                             Policy& generator, const ExpertPool& experts,
                             const EpisodeConfig& config, const SynthesisOptions& options,
                             const std::filesystem::path& out,
                             const PromptTemplate& tmpl = default_prompt_template());

/// Golden dataset persistence: the trajectory record schema plus
/// {provenance, accepted: true}.
std::string golden_to_json_line(const GoldenTrajectory& golden);
GoldenTrajectory golden_from_json_line(const std::string& line,
                                       const ExpertPool* experts = nullptr);
void save_golden_dataset(const std::vector<GoldenTrajectory>& dataset,
                         const std::filesystem::path& path);
std::vector<GoldenTrajectory> load_golden_dataset(const std::filesystem::path& path,
                                                  const ExpertPool* experts = nullptr);

}  // namespace remex
