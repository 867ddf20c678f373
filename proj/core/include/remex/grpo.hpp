#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remex/orchestrator.hpp"
#include "remex/rewards.hpp"
#include "remex/trajectory_types.hpp"

namespace remex {

/// One sampled emission: token ids plus per-token log-probabilities under the
/// old-policy snapshot and under the current policy.
struct RolloutSample {
    std::string text;
    std::vector<int> tokens;
    std::vector<double> logprob_old;
    std::vector<double> logprob_new;
};

enum class GroupKind { Action, Observation, FinalAnswer };

std::string to_string(GroupKind kind);

/// G emissions drawn for one conditioning prefix, with their scalar rewards.
struct RolloutGroup {
    std::string input_key;  // the rendered conditioning prefix
    std::vector<RolloutSample> samples;
    std::vector<double> rewards;
    GroupKind kind = GroupKind::Action;
    int step_index = 0;               // 1-based step for Action/Observation groups
    std::uint64_t snapshot_epoch = 0;
};

/// Which text the intermediate-observation groups are conditioned on.
enum class ObservationConditioning {
    StepOnly,    // the golden reason/action plus its retrieved documents
    FullPrefix,  // the query and full golden history up to the step
};

/// Which reference intermediate observation emissions are scored against.
enum class IntermediateTarget {
    GoldenObservation,  // the golden step's intermediate answer
    FinalAnswer,        // the trajectory's gold answer
};

struct TrainerConfig {
    int group_size = 8;
    double clip_epsilon = 0.2;
    double learning_rate = 1e-2;  // 1e-6 is the sensible default for remote policies
    double temperature = 1.0;
    double max_grad_norm = 1.0;
    int iterations = 100;
    std::uint64_t seed = 0;
    bool cosine_lr_decay = true;  // horizon = iterations
    ObservationConditioning observation_conditioning = ObservationConditioning::StepOnly;
    IntermediateTarget intermediate_target = IntermediateTarget::GoldenObservation;
};

void validate(const TrainerConfig& config);

/// Group-relative advantages: (r_k - mean) / population std. Groups with
/// std below 1e-12 normalize to all zeros. Throws if fewer than 2 rewards.
std::vector<double> normalize_advantages(const std::vector<double>& rewards);

/// min(ratio * advantage, clip(ratio, 1-eps, 1+eps) * advantage).
/// Throws on a non-finite or non-positive ratio.
double clipped_surrogate(double ratio, double advantage, double epsilon);

/// Negative group mean of clipped surrogates with a sequence-level ratio
/// (summed token log-probs) per sample. Each term is accumulated as
/// (surrogate - advantage); the subtracted advantages sum to zero, which
/// keeps the on-policy loss exactly zero.
double grpo_loss(const RolloutGroup& group, double epsilon);

/// Something that can draw one emission for a conditioning prefix from the
/// old-policy snapshot while scoring it under the live policy.
class RolloutSource {
  public:
    virtual ~RolloutSource() = default;
    virtual RolloutSample sample(GroupKind kind, const std::string& conditioning) = 0;
    virtual std::uint64_t snapshot_epoch() const = 0;
};

struct GroupDiagnostics {
    GroupKind kind = GroupKind::Action;
    int step_index = 0;
    double mean_reward = 0.0;
    std::string input_key;
};

struct StepwiseResult {
    double loss = 0.0;
    std::vector<RolloutGroup> groups;           // exactly 2*T + 1 groups
    std::vector<GroupDiagnostics> diagnostics;  // one entry per group
};

/// Thrown when the rollout source fails mid-sampling; carries every group
/// completed before the failure.
class StepwiseSamplingError : public Error {
  public:
    StepwiseSamplingError(const std::string& message, std::vector<RolloutGroup> completed)
        : Error(message), completed_(std::move(completed)) {}

    const std::vector<RolloutGroup>& completed_groups() const { return completed_; }

  private:
    std::vector<RolloutGroup> completed_;
};

/// The stepwise objective over one golden trajectory with T steps:
/// per step, one action group scored with the action reward and one
/// observation group scored with the observation reward, plus one
/// final-answer group — 2*T + 1 GRPO terms summed into the loss.
StepwiseResult stepwise_loss(const GoldenTrajectory& golden, RolloutSource& source,
                             const RewardConfig& reward_config, const TrainerConfig& trainer_config,
                             const SimilarityProvider& provider,
                             const PromptTemplate& tmpl = default_prompt_template());

}  // namespace remex
