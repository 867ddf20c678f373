#pragma once

#include <filesystem>

#include "remex/grpo.hpp"
#include "remex/llm_client.hpp"
#include "remex/orchestrator.hpp"
#include "remex/rewards.hpp"

namespace remex {

/// One file for everything: {"reward": {...}, "trainer": {...},
/// "episode": {...}, "llm": {...}}. Absent keys keep their defaults;
/// unknown keys are rejected so typos fail loudly.
struct EngineConfig {
    RewardConfig reward;
    TrainerConfig trainer;
    EpisodeConfig episode;
    EndpointConfig llm = EndpointConfig::from_env();
    int document_char_budget = 1500;
};

EngineConfig load_engine_config(const std::filesystem::path& path);

}  // namespace remex
