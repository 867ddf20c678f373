#include "remex/trajectory_synthesis.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "remex/rewards.hpp"
#include "remex/text.hpp"

namespace remex {

using nlohmann::json;

SampleResult sample_candidates(Policy& generator, const ExpertPool& experts, const Query& query,
                               const std::string& gold_answer, int n, const EpisodeConfig& config,
                               const PromptTemplate& tmpl) {
    if (n < 1) {
        throw std::invalid_argument("sample_candidates: n must be >= 1");
    }
    EpisodeConfig sampling_config = config;
    sampling_config.temperature = 1.0;
    SampleResult result;
    for (int i = 0; i < n; ++i) {
        try {
            Trajectory trajectory = run_episode(generator, experts, query, sampling_config, tmpl);
            trajectory.gold_answer = gold_answer;
            result.candidates.push_back(std::move(trajectory));
        } catch (const EpisodeError& e) {
            result.errors.push_back(e.what());
        }
    }
    return result;
}

namespace {

bool passes_dual_filter(const Trajectory& candidate) {
    if (!candidate.gold_answer) {
        throw std::invalid_argument("dual_filter: candidate has no gold answer");
    }
    // Filter 1: the trajectory actually leads to the gold answer.
    if (accuracy(candidate.answer, *candidate.gold_answer) != 1.0) {
        return false;
    }
    // Filter 2: structural validity — well-formed steps, no empty retrievals.
    for (const auto& step : candidate.steps) {
        if (!step.format_ok) {
            return false;
        }
        if (std::holds_alternative<SearchAction>(step.action) &&
            step.observation.documents.empty()) {
            return false;
        }
    }
    return true;
}

double mean_intermediate_f1(const Trajectory& candidate) {
    double sum = 0.0;
    int count = 0;
    for (const auto& step : candidate.steps) {
        if (std::holds_alternative<SearchAction>(step.action) &&
            !step.observation.intermediate_answer.empty()) {
            sum += f1_recall(step.observation.intermediate_answer, *candidate.gold_answer);
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

Trajectory strip_trailing_null(Trajectory trajectory) {
    while (!trajectory.steps.empty() &&
           std::holds_alternative<NoRetrievalAction>(trajectory.steps.back().action)) {
        trajectory.steps.pop_back();
    }
    return trajectory;
}

}  // namespace

std::vector<std::size_t> filter_survivors(const std::vector<Trajectory>& candidates) {
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (passes_dual_filter(candidates[i])) {
            survivors.push_back(i);
        }
    }
    return survivors;
}

std::optional<GoldenTrajectory> dual_filter(const std::vector<Trajectory>& candidates,
                                            const std::string& provenance) {
    const auto survivors = filter_survivors(candidates);
    if (survivors.empty()) {
        return std::nullopt;
    }
    std::size_t best = survivors[0];
    double best_f1 = mean_intermediate_f1(candidates[best]);
    for (std::size_t s = 1; s < survivors.size(); ++s) {
        const std::size_t index = survivors[s];
        const auto& candidate = candidates[index];
        const auto& current = candidates[best];
        if (candidate.steps.size() < current.steps.size()) {
            best = index;
            best_f1 = mean_intermediate_f1(candidate);
            continue;
        }
        if (candidate.steps.size() == current.steps.size()) {
            const double f1 = mean_intermediate_f1(candidate);
            if (f1 > best_f1) {
                best = index;
                best_f1 = f1;
            }
        }
    }
    GoldenTrajectory golden;
    golden.trajectory = strip_trailing_null(candidates[best]);
    golden.provenance = provenance;
    return golden;
}

std::vector<std::string> validate_golden(const GoldenTrajectory& golden) {
    std::vector<std::string> problems;
    const Trajectory& trajectory = golden.trajectory;
    if (!trajectory.gold_answer) {
        problems.push_back("missing gold answer");
        return problems;
    }
    if (accuracy(trajectory.answer, *trajectory.gold_answer) != 1.0) {
        problems.push_back("final answer \"" + trajectory.answer +
                           "\" does not match gold answer \"" + *trajectory.gold_answer + "\"");
    }
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& step = trajectory.steps[i];
        const std::string where = "step " + std::to_string(i + 1);
        if (!step.format_ok) {
            problems.push_back(where + " is not well-formed");
        }
        if (std::holds_alternative<SearchAction>(step.action)) {
            if (step.observation.documents.empty()) {
                problems.push_back(where + " retrieved no documents");
            }
        }
    }
    return problems;
}

DatasetSummary build_dataset(const std::vector<std::pair<Query, std::string>>& queries,
                             Policy& generator, const ExpertPool& experts,
                             const EpisodeConfig& config, const SynthesisOptions& options,
                             const std::filesystem::path& out, const PromptTemplate& tmpl) {
    if (queries.empty()) {
        throw std::invalid_argument("build_dataset: query list must not be empty");
    }
    std::ofstream sink(out);
    if (!sink) {
        throw ConfigError("cannot write dataset file: " + out.string());
    }
    DatasetSummary summary;
    summary.queries = static_cast<int>(queries.size());
    for (const auto& [query, gold_answer] : queries) {
        SampleResult sampled = sample_candidates(generator, experts, query, gold_answer,
                                                 options.n_per_query, config, tmpl);
        for (auto& error : sampled.errors) {
            summary.errors.push_back(query.id + ": " + error);
        }
        std::vector<GoldenTrajectory> accepted;
        if (options.keep_all_survivors) {
            for (std::size_t index : filter_survivors(sampled.candidates)) {
                GoldenTrajectory golden;
                golden.trajectory = strip_trailing_null(sampled.candidates[index]);
                golden.provenance = options.provenance;
                accepted.push_back(std::move(golden));
            }
        } else if (auto golden = dual_filter(sampled.candidates, options.provenance)) {
            accepted.push_back(std::move(*golden));
        }
        for (const auto& golden : accepted) {
            for (const auto& step : golden.trajectory.steps) {
                if (const auto* search = std::get_if<SearchAction>(&step.action)) {
                    ++summary.routing_distribution[search->expert];
                }
            }
            sink << golden_to_json_line(golden) << "\n";
        }
        summary.accepted += static_cast<int>(accepted.size());
    }
    summary.acceptance_rate = static_cast<double>(summary.accepted) / summary.queries;
    return summary;
}

std::string golden_to_json_line(const GoldenTrajectory& golden) {
    json j = json::parse(trajectory_to_json_line(golden.trajectory));
    j["provenance"] = golden.provenance;
    j["accepted"] = true;
    return j.dump();
}

GoldenTrajectory golden_from_json_line(const std::string& line, const ExpertPool* experts) {
    GoldenTrajectory golden;
    golden.trajectory = trajectory_from_json_line(line, experts);
    try {
        const json j = json::parse(line);
        golden.provenance = j.value("provenance", std::string{});
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid golden record: ") + e.what());
    }
    return golden;
}

void save_golden_dataset(const std::vector<GoldenTrajectory>& dataset,
                         const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write dataset file: " + path.string());
    }
    for (const auto& golden : dataset) {
        out << golden_to_json_line(golden) << "\n";
    }
}

std::vector<GoldenTrajectory> load_golden_dataset(const std::filesystem::path& path,
                                                  const ExpertPool* experts) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset file: " + path.string());
    }
    std::vector<GoldenTrajectory> dataset;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            dataset.push_back(golden_from_json_line(line, experts));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return dataset;
}

}  // namespace remex
