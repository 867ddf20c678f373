#include "remex/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "remex/errors.hpp"
#include "remex/text.hpp"

namespace remex {

using nlohmann::json;

double LexicalCosineSimilarity::similarity(const std::string& candidate,
                                           const std::string& golden) const {
    const auto golden_tf = term_frequencies(golden);
    if (golden_tf.empty()) {
        throw std::invalid_argument("query_similarity: golden string has no tokens");
    }
    const auto candidate_tf = term_frequencies(candidate);
    if (candidate_tf.empty()) {
        return 0.0;
    }
    double dot = 0.0;
    for (const auto& [term, count] : candidate_tf) {
        auto it = golden_tf.find(term);
        if (it != golden_tf.end()) {
            dot += count * it->second;
        }
    }
    double candidate_sq = 0.0;
    for (const auto& [term, count] : candidate_tf) {
        candidate_sq += count * count;
    }
    double golden_sq = 0.0;
    for (const auto& [term, count] : golden_tf) {
        golden_sq += count * count;
    }
    const double value = dot / std::sqrt(candidate_sq * golden_sq);
    return std::clamp(value, 0.0, 1.0);
}

struct RemoteEmbeddingSimilarity::Impl {
    EndpointConfig config;
    std::unique_ptr<HttpTransport> transport;
    std::function<void(std::chrono::milliseconds)> sleeper;
};

RemoteEmbeddingSimilarity::RemoteEmbeddingSimilarity(
    EndpointConfig config, std::unique_ptr<HttpTransport> transport,
    std::function<void(std::chrono::milliseconds)> sleeper) {
    if (config.base_url.empty()) {
        throw ConfigError("remote similarity needs an endpoint URL (set REMEX_ENDPOINT)");
    }
    if (!transport) {
        transport = make_http_transport(config);
    }
    if (!sleeper) {
        sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    impl_ = std::make_unique<Impl>(Impl{std::move(config), std::move(transport),
                                        std::move(sleeper)});
}

RemoteEmbeddingSimilarity::~RemoteEmbeddingSimilarity() = default;

double RemoteEmbeddingSimilarity::similarity(const std::string& candidate,
                                             const std::string& golden) const {
    if (trim(candidate).empty()) {
        return 0.0;
    }
    const json body{{"model", impl_->config.model},
                    {"input", json::array({candidate, golden})}};
    const std::string payload = body.dump();
    std::string response;
    std::chrono::milliseconds backoff(impl_->config.backoff_base_ms);
    for (int attempt = 0;; ++attempt) {
        try {
            response = impl_->transport->post_json("/v1/embeddings", payload);
            break;
        } catch (const TransportError&) {
            if (attempt >= impl_->config.retry_cap) {
                throw;
            }
            impl_->sleeper(backoff);
            backoff *= 2;
        }
    }
    std::vector<double> a;
    std::vector<double> b;
    try {
        const json j = json::parse(response);
        a = j.at("data").at(0).at("embedding").get<std::vector<double>>();
        b = j.at("data").at(1).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed embeddings response: ") + e.what());
    }
    if (a.size() != b.size() || a.empty()) {
        throw TransportError("embeddings response has mismatched dimensions");
    }
    double dot = 0.0;
    double a_sq = 0.0;
    double b_sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        a_sq += a[i] * a[i];
        b_sq += b[i] * b[i];
    }
    if (a_sq == 0.0 || b_sq == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / std::sqrt(a_sq * b_sq), 0.0, 1.0);
}

std::unique_ptr<SimilarityProvider> make_similarity_provider(const std::string& name) {
    if (name == "lexical-cosine") {
        return std::make_unique<LexicalCosineSimilarity>();
    }
    if (name == "remote") {
        return std::make_unique<RemoteEmbeddingSimilarity>(EndpointConfig::from_env());
    }
    throw ConfigError("unknown similarity provider \"" + name +
                      "\" (expected lexical-cosine or remote)");
}

void validate(const RewardConfig& config) {
    if (config.alpha < 0.0 || config.alpha > 1.0 || config.beta < 0.0 || config.beta > 1.0) {
        throw ConfigError("reward config: alpha and beta must lie in [0, 1]");
    }
    if (std::abs(config.alpha + config.beta - 1.0) > 1e-9) {
        throw ConfigError("reward config: alpha + beta must equal 1");
    }
}

double format_reward(const ParsedAction& parsed) {
    return parsed.format_ok ? 1.0 : 0.0;
}

double format_reward(const ParsedAnswer& parsed) {
    return parsed.format_ok ? 1.0 : 0.0;
}

double query_similarity(const std::string& candidate, const std::string& golden,
                        const SimilarityProvider& provider) {
    return provider.similarity(candidate, golden);
}

double query_similarity(const std::string& candidate, const std::string& golden) {
    static const LexicalCosineSimilarity lexical;
    return lexical.similarity(candidate, golden);
}

double route_reward(ExpertKind selected, ExpertKind golden_selected) {
    return selected == golden_selected ? 1.0 : 0.0;
}

RewardBreakdown compose_action_reward(double format, double ask, double route,
                                      const RewardConfig& config) {
    RewardBreakdown breakdown;
    breakdown.format = format;
    breakdown.ask = ask;
    breakdown.route = route;
    breakdown.composed = format * (config.alpha * ask + config.beta * route);
    return breakdown;
}

RewardBreakdown action_reward(const ParsedAction& parsed, const Action& golden_action,
                              const RewardConfig& config, const SimilarityProvider& provider) {
    const double format = format_reward(parsed);
    const bool golden_is_null = std::holds_alternative<NoRetrievalAction>(golden_action);
    const auto* golden_search = std::get_if<SearchAction>(&golden_action);
    if (golden_search == nullptr && !golden_is_null) {
        throw std::invalid_argument("action_reward: golden action must be a search or NULL");
    }

    double ask = 0.0;
    double route = 0.0;
    if (const auto* search = std::get_if<SearchAction>(&parsed.action)) {
        if (golden_search != nullptr) {
            ask = provider.similarity(search->query, golden_search->query);
            route = route_reward(search->expert, golden_search->expert);
        }
    } else if (std::holds_alternative<NoRetrievalAction>(parsed.action)) {
        // The NULL convention: full marks only when the golden action is NULL.
        ask = golden_is_null ? 1.0 : 0.0;
        route = golden_is_null ? 1.0 : 0.0;
    }
    return compose_action_reward(format, ask, route, config);
}

RewardBreakdown action_reward(const ReasoningStep& step, const ReasoningStep& golden_step,
                              const RewardConfig& config, const SimilarityProvider& provider) {
    ParsedAction parsed;
    parsed.reason = step.reason;
    parsed.action = step.action;
    parsed.format_ok = step.format_ok;
    return action_reward(parsed, golden_step.action, config, provider);
}

double f1_recall(const std::string& prediction, const std::string& gold) {
    const auto gold_tokens = tokenize(gold);
    if (gold_tokens.empty()) {
        throw std::invalid_argument("f1_recall: gold has no tokens");
    }
    auto remaining = term_frequencies(prediction);
    int matched = 0;
    for (const auto& token : gold_tokens) {
        auto it = remaining.find(token);
        if (it != remaining.end() && it->second > 0.0) {
            it->second -= 1.0;
            ++matched;
        }
    }
    return static_cast<double>(matched) / static_cast<double>(gold_tokens.size());
}

double accuracy(const std::string& prediction, const std::string& gold) {
    return normalize_answer(prediction) == normalize_answer(gold) ? 1.0 : 0.0;
}

RewardBreakdown observation_reward(const std::string& emitted, const std::string& gold,
                                   bool is_final) {
    if (tokenize(gold).empty()) {
        throw std::invalid_argument("observation_reward: gold must be non-empty");
    }
    const ParsedAnswer parsed = parse_answer(emitted);
    RewardBreakdown breakdown;
    breakdown.format = format_reward(parsed);
    breakdown.answer = is_final ? accuracy(parsed.text, gold) : f1_recall(parsed.text, gold);
    breakdown.composed = breakdown.format * breakdown.answer;
    return breakdown;
}

}  // namespace remex
