#include "remex/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "remex/text.hpp"

namespace remex {

std::string to_string(GroupKind kind) {
    switch (kind) {
        case GroupKind::Action:
            return "action";
        case GroupKind::Observation:
            return "observation";
        case GroupKind::FinalAnswer:
            return "final_answer";
    }
    return "action";
}

void validate(const TrainerConfig& config) {
    if (config.group_size < 2) {
        throw ConfigError("trainer config: group_size must be >= 2");
    }
    if (!(config.clip_epsilon > 0.0 && config.clip_epsilon < 1.0)) {
        throw ConfigError("trainer config: clip_epsilon must lie in (0, 1)");
    }
    if (config.learning_rate < 0.0) {
        throw ConfigError("trainer config: learning_rate must be >= 0");
    }
    if (config.temperature <= 0.0) {
        throw ConfigError("trainer config: temperature must be > 0");
    }
    if (config.max_grad_norm <= 0.0) {
        throw ConfigError("trainer config: max_grad_norm must be > 0");
    }
    if (config.iterations < 1) {
        throw ConfigError("trainer config: iterations must be >= 1");
    }
}

std::vector<double> normalize_advantages(const std::vector<double>& rewards) {
    const std::size_t g = rewards.size();
    if (g < 2) {
        throw std::invalid_argument("normalize_advantages: need at least 2 rewards");
    }
    double sum = 0.0;
    for (double r : rewards) {
        sum += r;
    }
    const double mean = sum / static_cast<double>(g);
    std::vector<double> deviations(g);
    double sq_sum = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
        deviations[k] = rewards[k] - mean;
        sq_sum += deviations[k] * deviations[k];
    }
    const double std_dev = std::sqrt(sq_sum / static_cast<double>(g));
    if (std_dev < 1e-12) {
        return std::vector<double>(g, 0.0);
    }
    for (double& d : deviations) {
        d /= std_dev;
    }
    return deviations;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
    if (!std::isfinite(ratio) || ratio <= 0.0) {
        throw std::invalid_argument("clipped_surrogate: ratio must be finite and positive");
    }
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

namespace {

double sequence_logprob(const std::vector<double>& logprobs) {
    double total = 0.0;
    for (double lp : logprobs) {
        total += lp;
    }
    return total;
}

void validate_group(const RolloutGroup& group) {
    if (group.samples.size() != group.rewards.size()) {
        throw std::invalid_argument("rollout group: samples and rewards must have equal length");
    }
    if (group.samples.size() < 2) {
        throw std::invalid_argument("rollout group: need at least 2 samples");
    }
    for (const auto& sample : group.samples) {
        if (sample.logprob_old.size() != sample.tokens.size() ||
            sample.logprob_new.size() != sample.tokens.size()) {
            throw std::invalid_argument(
                "rollout sample: log-probability sequences must match the token sequence length");
        }
    }
}

}  // namespace

double grpo_loss(const RolloutGroup& group, double epsilon) {
    validate_group(group);
    const auto advantages = normalize_advantages(group.rewards);
    const std::size_t g = group.samples.size();
    double total = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
        const double ratio = std::exp(sequence_logprob(group.samples[k].logprob_new) -
                                      sequence_logprob(group.samples[k].logprob_old));
        total += clipped_surrogate(ratio, advantages[k], epsilon) - advantages[k];
    }
    return -total / static_cast<double>(g);
}

namespace {

const ReasoningStep& golden_step_at(const GoldenTrajectory& golden, std::size_t index) {
    return golden.trajectory.steps[index];
}

std::string observation_conditioning_text(const GoldenTrajectory& golden, std::size_t index,
                                          const TrainerConfig& config,
                                          const PromptTemplate& tmpl) {
    const auto& step = golden_step_at(golden, index);
    const auto& search = std::get<SearchAction>(step.action);
    const std::string step_prompt =
        render_observation_prompt(step.reason, search, step.observation.documents, tmpl);
    if (config.observation_conditioning == ObservationConditioning::StepOnly) {
        return step_prompt;
    }
    const std::string prefix = render_step_prompt(
        golden.trajectory.query,
        std::span<const ReasoningStep>(golden.trajectory.steps.data(), index), tmpl);
    return prefix + "\n" + step_prompt;
}

}  // namespace

StepwiseResult stepwise_loss(const GoldenTrajectory& golden, RolloutSource& source,
                             const RewardConfig& reward_config,
                             const TrainerConfig& trainer_config,
                             const SimilarityProvider& provider, const PromptTemplate& tmpl) {
    const Trajectory& trajectory = golden.trajectory;
    if (trajectory.steps.empty()) {
        throw std::invalid_argument("stepwise_loss: golden trajectory needs at least one step");
    }
    if (!trajectory.gold_answer || tokenize(*trajectory.gold_answer).empty()) {
        throw std::invalid_argument("stepwise_loss: golden trajectory needs a gold answer");
    }
    for (const auto& step : trajectory.steps) {
        if (!std::holds_alternative<SearchAction>(step.action)) {
            throw std::invalid_argument(
                "stepwise_loss: every golden step must be a search action");
        }
    }

    StepwiseResult result;
    const int group_size = trainer_config.group_size;

    auto run_group = [&](GroupKind kind, int step_index, const std::string& conditioning,
                         auto&& score) {
        RolloutGroup group;
        group.input_key = conditioning;
        group.kind = kind;
        group.step_index = step_index;
        group.snapshot_epoch = source.snapshot_epoch();
        group.samples.reserve(group_size);
        group.rewards.reserve(group_size);
        for (int k = 0; k < group_size; ++k) {
            RolloutSample sample;
            try {
                sample = source.sample(kind, conditioning);
            } catch (const TransportError& e) {
                throw StepwiseSamplingError(
                    std::string("stepwise sampling failed: ") + e.what(),
                    std::move(result.groups));
            }
            group.rewards.push_back(score(sample.text));
            group.samples.push_back(std::move(sample));
        }
        result.loss += grpo_loss(group, trainer_config.clip_epsilon);
        double reward_sum = 0.0;
        for (double r : group.rewards) {
            reward_sum += r;
        }
        result.diagnostics.push_back(
            {kind, step_index, reward_sum / group_size, conditioning});
        result.groups.push_back(std::move(group));
    };

    for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
        const auto& golden_step = trajectory.steps[t];

        const std::string action_conditioning = render_step_prompt(
            trajectory.query, std::span<const ReasoningStep>(trajectory.steps.data(), t), tmpl);
        run_group(GroupKind::Action, static_cast<int>(t + 1), action_conditioning,
                  [&](const std::string& text) {
                      return action_reward(parse_action(text), golden_step.action, reward_config,
                                           provider)
                          .composed;
                  });

        const std::string obs_conditioning =
            observation_conditioning_text(golden, t, trainer_config, tmpl);
        const std::string& target =
            trainer_config.intermediate_target == IntermediateTarget::FinalAnswer
                ? *trajectory.gold_answer
                : golden_step.observation.intermediate_answer;
        run_group(GroupKind::Observation, static_cast<int>(t + 1), obs_conditioning,
                  [&](const std::string& text) {
                      return observation_reward(text, target, /*is_final=*/false).composed;
                  });
    }

    const std::string final_conditioning =
        render_final_prompt(trajectory.query, trajectory.steps, tmpl);
    run_group(GroupKind::FinalAnswer, 0, final_conditioning, [&](const std::string& text) {
        return observation_reward(text, *trajectory.gold_answer, /*is_final=*/true).composed;
    });

    return result;
}

}  // namespace remex
