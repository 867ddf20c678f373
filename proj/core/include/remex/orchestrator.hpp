#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "remex/errors.hpp"
#include "remex/expert_pool.hpp"
#include "remex/llm_client.hpp"

namespace remex {

struct SearchAction {
    ExpertKind expert = ExpertKind::Text;
    std::string query;  // non-empty, never the literal "NULL"
};

/// The "NULL" emission: existing knowledge suffices, go answer.
struct NoRetrievalAction {};

struct FinalAnswerAction {
    std::string text;
};

using Action = std::variant<SearchAction, NoRetrievalAction, FinalAnswerAction>;

/// Retrieved evidence plus the policy's intermediate answer over it.
struct Observation {
    std::vector<ScoredDocument> documents;
    std::string intermediate_answer;

    bool empty() const { return documents.empty() && intermediate_answer.empty(); }
};

struct ReasoningStep {
    std::string reason;
    Action action;
    Observation observation;
    bool format_ok = true;
};

struct Trajectory {
    std::string query_id;
    std::string query;
    std::vector<ReasoningStep> steps;
    std::string answer;
    std::optional<std::string> gold_answer;
};

/// Number of steps that actually queried an expert.
int retrieval_step_count(const Trajectory& trajectory);

struct Query {
    std::string id;
    std::string text;
};

struct EpisodeConfig {
    int max_steps = 3;
    int top_k = 3;
    std::uint64_t seed = 0;
    double temperature = 1.0;
};

void validate(const EpisodeConfig& config);

/// Prompt skeletons. {query} and {history} drive the step and final-answer
/// prompts; the observation prompt sees {reason}, {expert}, {search}, and
/// {documents}. Document bodies are truncated to document_char_budget.
struct PromptTemplate {
    std::string step;
    std::string observation;
    std::string final_answer;
    int document_char_budget = 1500;
};

const PromptTemplate& default_prompt_template();

struct ParsedAction {
    std::string reason;
    Action action = NoRetrievalAction{};
    bool format_ok = false;
};

struct ParsedAnswer {
    std::string text;
    bool format_ok = false;
};

/// Parses a policy action emission against the grammar
///   <think>REASON</think>
///   followed by exactly one of
///   <search expert="text|image|table">QUERY</search>  |  <answer>TEXT</answer>
/// where QUERY equal to "NULL" means no retrieval. Never throws: any
/// deviation yields format_ok=false with a best-effort Action for logging.
ParsedAction parse_action(const std::string& raw);

/// Parses an answer emission: an optional <think> block followed by exactly
/// one <answer>TEXT</answer> and nothing else. Never throws.
ParsedAnswer parse_answer(const std::string& raw);

/// Renders the action prompt for the next step: {query} and {history}
/// substituted, history listing each prior step's reason, action, retrieved
/// documents (truncated), and intermediate answer. Throws ConfigError if the
/// template lacks either placeholder.
std::string render_step_prompt(const std::string& query, std::span<const ReasoningStep> prior,
                               const PromptTemplate& tmpl);

/// Renders the prompt asking for an intermediate answer over one step's
/// retrieved documents.
std::string render_observation_prompt(const std::string& reason, const SearchAction& action,
                                      std::span<const ScoredDocument> documents,
                                      const PromptTemplate& tmpl);

/// Renders the final-answer prompt conditioned on the whole trajectory.
std::string render_final_prompt(const std::string& query, std::span<const ReasoningStep> steps,
                                const PromptTemplate& tmpl);

/// Thrown when the policy transport fails mid-episode; carries whatever part
/// of the trajectory was completed.
class EpisodeError : public Error {
  public:
    EpisodeError(const std::string& message, Trajectory partial)
        : Error(message), partial_(std::move(partial)) {}

    const Trajectory& partial_trajectory() const { return partial_; }

  private:
    Trajectory partial_;
};

/// Runs one reasoning-action-observation episode of at most max_steps steps.
///
/// Per step the policy emits an action. A well-formed search routes the
/// sub-query to the selected expert and the policy then produces an
/// intermediate answer over the results. A well-formed NULL stops retrieval
/// without consuming a step and moves straight to the final answer. A
/// malformed emission is recorded with format_ok=false and consumes a step.
/// An <answer> emission ends the episode without being recorded as a step.
Trajectory run_episode(Policy& policy, const ExpertPool& experts, const Query& query,
                       const EpisodeConfig& config,
                       const PromptTemplate& tmpl = default_prompt_template());

/// Line-delimited trajectory persistence:
/// {query_id, query, steps: [{reason, expert, search_query, doc_ids,
/// intermediate_answer, format_ok}], answer, gold_answer}. A NULL step is
/// written with expert "null" and an empty search_query.
std::string trajectory_to_json_line(const Trajectory& trajectory);
void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::filesystem::path& path);

/// Loads trajectories; when a pool is given, document bodies are rehydrated
/// from the indexes (missing ids are an error).
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path,
                                          const ExpertPool* experts = nullptr);
Trajectory trajectory_from_json_line(const std::string& line, const ExpertPool* experts = nullptr);

}  // namespace remex
