#include "remex/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace remex {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& section, const std::set<std::string>& known,
                         const std::string& name) {
    for (const auto& [key, value] : section.items()) {
        if (!known.count(key)) {
            throw ConfigError("config: unknown key \"" + key + "\" in section \"" + name + "\"");
        }
    }
}

}  // namespace

EngineConfig load_engine_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid config file " + path.string() + ": " + e.what());
    }
    EngineConfig config;
    reject_unknown_keys(j, {"reward", "trainer", "episode", "llm"}, "(root)");

    if (j.contains("reward")) {
        const auto& section = j["reward"];
        reject_unknown_keys(section, {"alpha", "beta", "similarity_provider"}, "reward");
        config.reward.alpha = section.value("alpha", config.reward.alpha);
        config.reward.beta = section.value("beta", config.reward.beta);
        config.reward.similarity_provider =
            section.value("similarity_provider", config.reward.similarity_provider);
        validate(config.reward);
    }
    if (j.contains("trainer")) {
        const auto& section = j["trainer"];
        reject_unknown_keys(section,
                            {"group_size", "clip_epsilon", "learning_rate", "temperature",
                             "max_grad_norm", "iterations", "seed", "cosine_lr_decay",
                             "observation_conditioning", "intermediate_target"},
                            "trainer");
        config.trainer.group_size = section.value("group_size", config.trainer.group_size);
        config.trainer.clip_epsilon = section.value("clip_epsilon", config.trainer.clip_epsilon);
        config.trainer.learning_rate =
            section.value("learning_rate", config.trainer.learning_rate);
        config.trainer.temperature = section.value("temperature", config.trainer.temperature);
        config.trainer.max_grad_norm =
            section.value("max_grad_norm", config.trainer.max_grad_norm);
        config.trainer.iterations = section.value("iterations", config.trainer.iterations);
        config.trainer.seed = section.value("seed", config.trainer.seed);
        config.trainer.cosine_lr_decay =
            section.value("cosine_lr_decay", config.trainer.cosine_lr_decay);
        if (section.contains("observation_conditioning")) {
            const std::string mode = section["observation_conditioning"].get<std::string>();
            if (mode == "step_only") {
                config.trainer.observation_conditioning = ObservationConditioning::StepOnly;
            } else if (mode == "full_prefix") {
                config.trainer.observation_conditioning = ObservationConditioning::FullPrefix;
            } else {
                throw ConfigError("config: observation_conditioning must be step_only or "
                                  "full_prefix");
            }
        }
        if (section.contains("intermediate_target")) {
            const std::string target = section["intermediate_target"].get<std::string>();
            if (target == "golden_observation") {
                config.trainer.intermediate_target = IntermediateTarget::GoldenObservation;
            } else if (target == "final_answer") {
                config.trainer.intermediate_target = IntermediateTarget::FinalAnswer;
            } else {
                throw ConfigError("config: intermediate_target must be golden_observation or "
                                  "final_answer");
            }
        }
        validate(config.trainer);
    }
    if (j.contains("episode")) {
        const auto& section = j["episode"];
        reject_unknown_keys(section, {"max_steps", "top_k", "seed", "context_char_budget"},
                            "episode");
        config.episode.max_steps = section.value("max_steps", config.episode.max_steps);
        config.episode.top_k = section.value("top_k", config.episode.top_k);
        config.episode.seed = section.value("seed", config.episode.seed);
        config.document_char_budget =
            section.value("context_char_budget", config.document_char_budget);
        validate(config.episode);
    }
    if (j.contains("llm")) {
        const auto& section = j["llm"];
        reject_unknown_keys(section,
                            {"retry_cap", "backoff_base_ms", "concurrency_limit", "timeout_ms"},
                            "llm");
        config.llm.retry_cap = section.value("retry_cap", config.llm.retry_cap);
        config.llm.backoff_base_ms = section.value("backoff_base_ms", config.llm.backoff_base_ms);
        config.llm.concurrency_limit =
            section.value("concurrency_limit", config.llm.concurrency_limit);
        config.llm.timeout_ms = section.value("timeout_ms", config.llm.timeout_ms);
    }
    return config;
}

}  // namespace remex
