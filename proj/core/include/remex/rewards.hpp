#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>

#include "remex/orchestrator.hpp"

namespace remex {

/// Pluggable semantic similarity in [0, 1]. The lexical default keeps the
/// engine fully offline; a remote embedding provider can be swapped in
/// without touching the reward equations.
class SimilarityProvider {
  public:
    virtual ~SimilarityProvider() = default;
    virtual double similarity(const std::string& candidate, const std::string& golden) const = 0;
};

/// Cosine over term-frequency vectors. Identical strings score exactly 1;
/// token-disjoint strings score 0; an empty candidate scores 0.
class LexicalCosineSimilarity : public SimilarityProvider {
  public:
    double similarity(const std::string& candidate, const std::string& golden) const override;
};

/// Embedding cosine via an OpenAI-compatible /v1/embeddings endpoint,
/// clamped to [0, 1]. Calls are retried with exponential backoff up to the
/// endpoint's retry cap; exhausted retries propagate as TransportError.
class RemoteEmbeddingSimilarity : public SimilarityProvider {
  public:
    explicit RemoteEmbeddingSimilarity(
        EndpointConfig config, std::unique_ptr<HttpTransport> transport = nullptr,
        std::function<void(std::chrono::milliseconds)> sleeper = {});
    ~RemoteEmbeddingSimilarity() override;

    double similarity(const std::string& candidate, const std::string& golden) const override;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<SimilarityProvider> make_similarity_provider(const std::string& name);

struct RewardConfig {
    double alpha = 0.5;  // weight of the sub-query similarity term
    double beta = 0.5;   // weight of the routing term
    std::string similarity_provider = "lexical-cosine";
};

/// alpha and beta must lie in [0, 1] and sum to 1.
void validate(const RewardConfig& config);

struct RewardBreakdown {
    double format = 0.0;  // {0, 1}
    double ask = 0.0;     // [0, 1]
    double route = 0.0;   // {0, 1}
    double answer = 0.0;  // [0, 1]
    double composed = 0.0;
};

/// 1 iff the emission honored the action grammar.
double format_reward(const ParsedAction& parsed);
/// 1 iff the emission is exactly one well-formed <answer> block.
double format_reward(const ParsedAnswer& parsed);

/// Sub-query quality against the golden sub-query, via the provider.
/// An empty candidate scores 0; an empty golden is a precondition violation.
double query_similarity(const std::string& candidate, const std::string& golden,
                        const SimilarityProvider& provider);
double query_similarity(const std::string& candidate, const std::string& golden);

/// 1 iff the selected expert matches the golden selection.
double route_reward(ExpertKind selected, ExpertKind golden_selected);

/// format x (alpha * ask + beta * route), given already-scored components.
RewardBreakdown compose_action_reward(double format, double ask, double route,
                                      const RewardConfig& config);

/// Scores a sampled action emission against the golden action for the same
/// step index. A NULL emission scores ask/route 1 only when the golden action
/// is NULL as well.
RewardBreakdown action_reward(const ParsedAction& parsed, const Action& golden_action,
                              const RewardConfig& config,
                              const SimilarityProvider& provider);
RewardBreakdown action_reward(const ReasoningStep& step, const ReasoningStep& golden_step,
                              const RewardConfig& config,
                              const SimilarityProvider& provider);

/// Token-level recall of gold tokens found in the prediction, after
/// lowercase/punctuation normalization; duplicate gold tokens count up to
/// their multiplicity. Throws if gold has no tokens.
double f1_recall(const std::string& prediction, const std::string& gold);

/// 1 iff normalized exact match (lowercase, strip punctuation and articles,
/// collapse whitespace).
double accuracy(const std::string& prediction, const std::string& gold);

/// Scores an answer emission (raw text, tags included): format x answer,
/// where answer is f1_recall for intermediate observations and accuracy for
/// the final answer. Gold must be non-empty.
RewardBreakdown observation_reward(const std::string& emitted, const std::string& gold,
                                   bool is_final);

}  // namespace remex
