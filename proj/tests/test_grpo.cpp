#include <doctest.h>

#include <cmath>
#include <random>

#include "remex/grpo.hpp"
#include "remex/toy_policy.hpp"
#include "support/synthetic_task.hpp"

using namespace remex;

namespace {

RolloutSample on_policy_sample(std::vector<int> tokens, std::vector<double> logprobs) {
    RolloutSample sample;
    sample.tokens = std::move(tokens);
    sample.logprob_old = logprobs;
    sample.logprob_new = std::move(logprobs);
    return sample;
}

RolloutGroup two_sample_group(double ratio0, double ratio1, std::vector<double> rewards) {
    RolloutGroup group;
    group.input_key = "key";
    group.samples.push_back(on_policy_sample({0}, {std::log(1.0)}));
    group.samples.push_back(on_policy_sample({0}, {std::log(1.0)}));
    group.samples[0].logprob_new = {std::log(ratio0)};
    group.samples[1].logprob_new = {std::log(ratio1)};
    group.samples[0].logprob_old = {0.0};
    group.samples[1].logprob_old = {0.0};
    group.rewards = std::move(rewards);
    return group;
}

}  // namespace

TEST_CASE("normalize_advantages matches the hand-evaluated formula") {
    SUBCASE("two rewards") {
        const auto advantages = normalize_advantages({1.0, 0.0});
        REQUIRE(advantages.size() == 2);
        CHECK(advantages[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(advantages[1] == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("zero variance returns all zeros") {
        CHECK(normalize_advantages({1.0, 1.0, 1.0}) == std::vector<double>{0.0, 0.0, 0.0});
    }
    SUBCASE("three rewards, population std sqrt(2/3)") {
        const auto advantages = normalize_advantages({2.0, 1.0, 0.0});
        REQUIRE(advantages.size() == 3);
        CHECK(advantages[0] == doctest::Approx(std::sqrt(1.5)).epsilon(1e-12));
        CHECK(advantages[1] == doctest::Approx(0.0));
        CHECK(advantages[2] == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-12));
    }
    SUBCASE("fewer than two rewards is an error") {
        CHECK_THROWS_AS(normalize_advantages({1.0}), std::invalid_argument);
        CHECK_THROWS_AS(normalize_advantages({}), std::invalid_argument);
    }
}

TEST_CASE("normalized advantages have mean zero and unit std") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> reward(0.0, 1.0);
    for (int round = 0; round < 200; ++round) {
        const int g = 2 + static_cast<int>(rng() % 15);
        std::vector<double> rewards(g);
        for (double& r : rewards) {
            r = reward(rng);
        }
        const auto advantages = normalize_advantages(rewards);
        double mean = 0.0;
        for (double a : advantages) {
            mean += a;
        }
        mean /= g;
        double variance = 0.0;
        for (double a : advantages) {
            variance += (a - mean) * (a - mean);
        }
        variance /= g;
        if (advantages == std::vector<double>(g, 0.0)) {
            continue;  // degenerate group guard
        }
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(variance) - 1.0) < 1e-9);
    }
}

TEST_CASE("clipped_surrogate matches the hand-evaluated cases") {
    CHECK(clipped_surrogate(1.0, 0.5, 0.2) == 0.5);
    CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-12));
}

TEST_CASE("clipped_surrogate rejects invalid ratios") {
    CHECK_THROWS_AS(clipped_surrogate(std::nan(""), 1.0, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(clipped_surrogate(-1.0, 1.0, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(clipped_surrogate(0.0, 1.0, 0.2), std::invalid_argument);
}

TEST_CASE("clipped surrogate obeys the clipping bound for positive advantages") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ratio_draw(0.01, 5.0);
    std::uniform_real_distribution<double> advantage_draw(0.0, 3.0);
    for (int i = 0; i < 10000; ++i) {
        const double ratio = ratio_draw(rng);
        const double advantage = advantage_draw(rng);
        CHECK(clipped_surrogate(ratio, advantage, 0.2) <= (1.0 + 0.2) * advantage);
    }
}

TEST_CASE("grpo_loss is exactly zero on-policy") {
    RolloutGroup group;
    group.input_key = "key";
    group.samples.push_back(on_policy_sample({0, 5}, {-0.3, -1.7}));
    group.samples.push_back(on_policy_sample({1}, {-0.9}));
    group.samples.push_back(on_policy_sample({2, 6}, {-0.2, -0.4}));
    group.rewards = {0.3, 0.1, 0.7};
    CHECK(grpo_loss(group, 0.2) == 0.0);
}

TEST_CASE("grpo_loss matches the two-sample hand computation") {
    CHECK(grpo_loss(two_sample_group(1.0, 1.0, {1.0, 0.0}), 0.2) == 0.0);
    // ratios {1.5, 1.0} with advantages {1, -1}: -((1.2 - 1) + (-1 + 1)) / 2.
    CHECK(grpo_loss(two_sample_group(1.5, 1.0, {1.0, 0.0}), 0.2) ==
          doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("grpo_loss is zero for zero-variance rewards") {
    CHECK(grpo_loss(two_sample_group(1.7, 0.4, {0.5, 0.5}), 0.2) == 0.0);
}

TEST_CASE("grpo_loss validates group shape") {
    RolloutGroup group;
    group.samples.push_back(on_policy_sample({0}, {-0.1}));
    group.rewards = {1.0, 0.0};
    CHECK_THROWS_AS(grpo_loss(group, 0.2), std::invalid_argument);
    group.samples.push_back(on_policy_sample({0}, {-0.1, -0.2}));  // length mismatch
    group.samples[1].tokens = {0};
    CHECK_THROWS_AS(grpo_loss(group, 0.2), std::invalid_argument);
}

TEST_CASE("reward shift invariance is bit-exact for dyadic rewards and G = 8") {
    std::mt19937_64 rng(13);
    for (int round = 0; round < 50; ++round) {
        RolloutGroup group;
        group.input_key = "key";
        for (int k = 0; k < 8; ++k) {
            const double ratio = 0.5 + static_cast<double>(rng() % 100) / 64.0;
            group.samples.push_back(on_policy_sample({0}, {0.0}));
            group.samples.back().logprob_new = {std::log(ratio)};
            group.rewards.push_back(static_cast<double>(rng() % 9) / 8.0);
        }
        const int shift = static_cast<int>(rng() % 11) - 5;
        RolloutGroup shifted = group;
        for (double& r : shifted.rewards) {
            r += shift;
        }
        const auto base_adv = normalize_advantages(group.rewards);
        const auto shifted_adv = normalize_advantages(shifted.rewards);
        for (std::size_t i = 0; i < base_adv.size(); ++i) {
            CHECK(base_adv[i] == shifted_adv[i]);
        }
        CHECK(grpo_loss(group, 0.2) == grpo_loss(shifted, 0.2));
    }
}

TEST_CASE("stepwise_loss produces exactly 2T + 1 groups") {
    const auto task = remex::testing::make_synthetic_task(2);
    auto policy = task.make_policy();
    const auto dataset = task.golden_dataset();
    const RewardConfig reward_config;
    TrainerConfig trainer_config;
    trainer_config.group_size = 4;
    const LexicalCosineSimilarity provider;

    for (std::size_t steps = 1; steps <= 3; ++steps) {
        // Build a golden trajectory with `steps` steps by repeating the
        // single synthetic step.
        GoldenTrajectory golden = dataset[0];
        while (golden.trajectory.steps.size() < steps) {
            golden.trajectory.steps.push_back(golden.trajectory.steps[0]);
        }
        auto source = ToyRolloutSource(policy, policy.take_snapshot(), 1.0, 99);
        const auto result =
            stepwise_loss(golden, source, reward_config, trainer_config, provider);
        CHECK(result.groups.size() == 2 * steps + 1);
        CHECK(result.diagnostics.size() == 2 * steps + 1);
        // Freshly sampled groups are on-policy, so every term is zero.
        CHECK(result.loss == 0.0);
        int actions = 0;
        int observations = 0;
        int finals = 0;
        for (const auto& group : result.groups) {
            CHECK(group.samples.size() == 4);
            switch (group.kind) {
                case GroupKind::Action:
                    ++actions;
                    break;
                case GroupKind::Observation:
                    ++observations;
                    break;
                case GroupKind::FinalAnswer:
                    ++finals;
                    break;
            }
        }
        CHECK(actions == static_cast<int>(steps));
        CHECK(observations == static_cast<int>(steps));
        CHECK(finals == 1);
    }
}

TEST_CASE("stepwise_loss rejects golden trajectories without steps or a gold answer") {
    const auto task = remex::testing::make_synthetic_task(1);
    auto policy = task.make_policy();
    const RewardConfig reward_config;
    const TrainerConfig trainer_config;
    const LexicalCosineSimilarity provider;
    auto source = ToyRolloutSource(policy, policy.take_snapshot(), 1.0, 1);

    GoldenTrajectory no_steps = task.golden_dataset()[0];
    no_steps.trajectory.steps.clear();
    CHECK_THROWS_AS(stepwise_loss(no_steps, source, reward_config, trainer_config, provider),
                    std::invalid_argument);

    GoldenTrajectory no_gold = task.golden_dataset()[0];
    no_gold.trajectory.gold_answer.reset();
    CHECK_THROWS_AS(stepwise_loss(no_gold, source, reward_config, trainer_config, provider),
                    std::invalid_argument);
}

TEST_CASE("trainer config validation enforces the documented ranges") {
    TrainerConfig config;
    CHECK_NOTHROW(validate(config));
    config.group_size = 1;
    CHECK_THROWS_AS(validate(config), ConfigError);
    config.group_size = 8;
    config.clip_epsilon = 1.0;
    CHECK_THROWS_AS(validate(config), ConfigError);
    config.clip_epsilon = 0.2;
    config.temperature = 0.0;
    CHECK_THROWS_AS(validate(config), ConfigError);
}

TEST_CASE("observation groups honor the conditioning-mode switch") {
    const auto task = remex::testing::make_synthetic_task(1);
    auto policy = task.make_policy();
    const auto golden = task.golden_dataset()[0];
    const RewardConfig reward_config;
    const LexicalCosineSimilarity provider;

    TrainerConfig step_only;
    step_only.group_size = 2;
    auto source_a = ToyRolloutSource(policy, policy.take_snapshot(), 1.0, 5);
    const auto narrow = stepwise_loss(golden, source_a, reward_config, step_only, provider);

    TrainerConfig full_prefix = step_only;
    full_prefix.observation_conditioning = ObservationConditioning::FullPrefix;
    auto source_b = ToyRolloutSource(policy, policy.take_snapshot(), 1.0, 5);
    const auto wide = stepwise_loss(golden, source_b, reward_config, full_prefix, provider);

    const auto find_observation = [](const StepwiseResult& result) -> const RolloutGroup& {
        for (const auto& group : result.groups) {
            if (group.kind == GroupKind::Observation) {
                return group;
            }
        }
        throw std::logic_error("no observation group");
    };
    const auto& narrow_group = find_observation(narrow);
    const auto& wide_group = find_observation(wide);
    // The narrow conditioning sees only the golden reason/action/documents;
    // the full-prefix conditioning additionally carries the question.
    CHECK(narrow_group.input_key.find(golden.trajectory.query) == std::string::npos);
    CHECK(wide_group.input_key.find(golden.trajectory.query) != std::string::npos);
    CHECK(wide_group.input_key.find(narrow_group.input_key) != std::string::npos);
}

TEST_CASE("intermediate observations score against the configured target") {
    // A policy whose only emission is the golden intermediate answer: full
    // marks against the golden observation, zero against the gold answer.
    const auto task = remex::testing::make_synthetic_task(1);
    GoldenTrajectory golden = task.golden_dataset()[0];
    golden.trajectory.steps[0].observation.intermediate_answer = "evidence summary words";
    ToyRoutingPolicy policy(task.vocabulary, {"evidence summary words"});
    const RewardConfig reward_config;
    const LexicalCosineSimilarity provider;

    TrainerConfig against_observation;
    against_observation.group_size = 2;
    auto source_a = ToyRolloutSource(policy, policy.take_snapshot(), 1.0, 7);
    const auto scored_obs =
        stepwise_loss(golden, source_a, reward_config, against_observation, provider);

    TrainerConfig against_final = against_observation;
    against_final.intermediate_target = IntermediateTarget::FinalAnswer;
    auto source_b = ToyRolloutSource(policy, policy.take_snapshot(), 1.0, 7);
    const auto scored_final =
        stepwise_loss(golden, source_b, reward_config, against_final, provider);

    for (const auto& diag : scored_obs.diagnostics) {
        if (diag.kind == GroupKind::Observation) {
            CHECK(diag.mean_reward == 1.0);
        }
    }
    for (const auto& diag : scored_final.diagnostics) {
        if (diag.kind == GroupKind::Observation) {
            CHECK(diag.mean_reward == 0.0);  // gold answer shares no tokens
        }
    }
}

namespace {

/// Delegates to a toy source until a scripted failure point.
class FlakyRolloutSource : public RolloutSource {
  public:
    FlakyRolloutSource(RolloutSource& inner, int fail_after)
        : inner_(inner), remaining_(fail_after) {}

    RolloutSample sample(GroupKind kind, const std::string& conditioning) override {
        if (remaining_-- <= 0) {
            throw TransportError("rollout endpoint unavailable");
        }
        return inner_.sample(kind, conditioning);
    }

    std::uint64_t snapshot_epoch() const override { return inner_.snapshot_epoch(); }

  private:
    RolloutSource& inner_;
    int remaining_;
};

}  // namespace

TEST_CASE("stepwise sampling failures carry the groups completed so far") {
    const auto task = remex::testing::make_synthetic_task(1);
    auto policy = task.make_policy();
    GoldenTrajectory golden = task.golden_dataset()[0];
    golden.trajectory.steps.push_back(golden.trajectory.steps[0]);  // T = 2 -> 5 groups
    const RewardConfig reward_config;
    TrainerConfig trainer_config;
    trainer_config.group_size = 4;
    const LexicalCosineSimilarity provider;

    ToyRolloutSource inner(policy, policy.take_snapshot(), 1.0, 3);
    FlakyRolloutSource source(inner, 4 * 2 + 1);  // dies inside the third group
    try {
        stepwise_loss(golden, source, reward_config, trainer_config, provider);
        FAIL("expected StepwiseSamplingError");
    } catch (const StepwiseSamplingError& e) {
        CHECK(e.completed_groups().size() == 2);
        for (const auto& group : e.completed_groups()) {
            CHECK(group.samples.size() == 4);
        }
    }
}
