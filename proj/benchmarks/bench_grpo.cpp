#include <benchmark/benchmark.h>

#include <random>

#include "remex/grpo.hpp"
#include "remex/toy_policy.hpp"

namespace {

remex::ToyRoutingPolicy bench_policy() {
    std::vector<std::string> vocabulary;
    std::vector<std::string> templates;
    for (int i = 0; i < 64; ++i) {
        vocabulary.push_back("term" + std::to_string(i));
    }
    for (int i = 0; i < 96; ++i) {
        templates.push_back("term" + std::to_string(i % 64) + " term" +
                            std::to_string((i + 7) % 64));
    }
    return remex::ToyRoutingPolicy(vocabulary, templates);
}

std::vector<remex::RolloutGroup> bench_groups(remex::ToyRoutingPolicy& policy, int group_count) {
    std::mt19937_64 rng(3);
    remex::ToyRolloutSource source(policy, policy.take_snapshot(), 1.0, 11);
    std::vector<remex::RolloutGroup> groups;
    for (int g = 0; g < group_count; ++g) {
        remex::RolloutGroup group;
        group.input_key = "term1 term2 term" + std::to_string(g % 64) + " question";
        group.kind = remex::GroupKind::Action;
        group.snapshot_epoch = source.snapshot_epoch();
        for (int k = 0; k < 8; ++k) {
            group.samples.push_back(source.sample(group.kind, group.input_key));
            group.rewards.push_back(static_cast<double>(rng() % 9) / 8.0);
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

void BM_NormalizeAdvantages(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
    for (double& r : rewards) {
        r = static_cast<double>(rng() % 100) / 100.0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(remex::normalize_advantages(rewards));
    }
}
BENCHMARK(BM_NormalizeAdvantages)->Arg(8)->Arg(64);

void BM_GrpoLoss(benchmark::State& state) {
    auto policy = bench_policy();
    const auto groups = bench_groups(policy, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(remex::grpo_loss(groups[0], 0.2));
    }
}
BENCHMARK(BM_GrpoLoss);

void BM_ToyPolicyGradient(benchmark::State& state) {
    auto policy = bench_policy();
    auto groups = bench_groups(policy, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(remex::toy_policy_gradient(policy, groups, remex::TrainerConfig{}));
    }
}
BENCHMARK(BM_ToyPolicyGradient)->Arg(8)->Arg(32);

}  // namespace
