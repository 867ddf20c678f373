#include "remex/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "remex/text.hpp"

namespace remex {

using nlohmann::json;

double ToyPolicyGradient::l2_norm() const {
    double sq = 0.0;
    for (double w : route_weights) {
        sq += w * w;
    }
    for (double w : template_weights) {
        sq += w * w;
    }
    return std::sqrt(sq);
}

void ToyPolicyGradient::scale(double factor) {
    for (double& w : route_weights) {
        w *= factor;
    }
    for (double& w : template_weights) {
        w *= factor;
    }
}

ToyRoutingPolicy::ToyRoutingPolicy(std::vector<std::string> vocabulary,
                                   std::vector<std::string> templates)
    : vocabulary_(std::move(vocabulary)), templates_(std::move(templates)) {
    if (templates_.empty()) {
        throw ConfigError("toy policy: template set must not be empty");
    }
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
        if (!vocabulary_index_.emplace(vocabulary_[i], static_cast<int>(i)).second) {
            throw ConfigError("toy policy: duplicate vocabulary term \"" + vocabulary_[i] + "\"");
        }
    }
    route_weights_.assign(static_cast<std::size_t>(feature_count()) * kRouteCount, 0.0);
    template_weights_.assign(static_cast<std::size_t>(feature_count()) * templates_.size(), 0.0);
}

ToyRoutingPolicy::SparseFeatures ToyRoutingPolicy::featurize(const std::string& text) const {
    std::vector<double> counts(vocabulary_.size(), 0.0);
    for (const auto& token : tokenize(text)) {
        auto it = vocabulary_index_.find(token);
        if (it != vocabulary_index_.end()) {
            counts[static_cast<std::size_t>(it->second)] += 1.0;
        }
    }
    SparseFeatures features;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] != 0.0) {
            features.emplace_back(static_cast<int>(i), counts[i]);
        }
    }
    features.emplace_back(vocabulary_size(), 1.0);  // bias
    return features;
}

std::vector<double> ToyRoutingPolicy::head_probabilities(const std::vector<double>& weights,
                                                         int column_count,
                                                         const SparseFeatures& features,
                                                         double temperature) {
    std::vector<double> logits(column_count, 0.0);
    for (const auto& [index, value] : features) {
        const std::size_t row = static_cast<std::size_t>(index) * column_count;
        for (int c = 0; c < column_count; ++c) {
            logits[c] += weights[row + c] * value;
        }
    }
    double max_logit = logits[0];
    for (double z : logits) {
        max_logit = std::max(max_logit, z);
    }
    double sum = 0.0;
    for (double& z : logits) {
        z = std::exp((z - max_logit) / temperature);
        sum += z;
    }
    for (double& z : logits) {
        z /= sum;
    }
    return logits;
}

double ToyRoutingPolicy::head_logprob(const std::vector<double>& weights, int column_count,
                                      const SparseFeatures& features, int index,
                                      double temperature) {
    std::vector<double> logits(column_count, 0.0);
    for (const auto& [feature, value] : features) {
        const std::size_t row = static_cast<std::size_t>(feature) * column_count;
        for (int c = 0; c < column_count; ++c) {
            logits[c] += weights[row + c] * value;
        }
    }
    double max_logit = logits[0];
    for (double z : logits) {
        max_logit = std::max(max_logit, z);
    }
    double sum = 0.0;
    for (double z : logits) {
        sum += std::exp((z - max_logit) / temperature);
    }
    return (logits[index] - max_logit) / temperature - std::log(sum);
}

std::vector<double> ToyRoutingPolicy::route_probabilities(const SparseFeatures& features,
                                                          double temperature) const {
    return head_probabilities(route_weights_, kRouteCount, features, temperature);
}

std::vector<double> ToyRoutingPolicy::template_probabilities(const SparseFeatures& features,
                                                             double temperature) const {
    return head_probabilities(template_weights_, template_count(), features, temperature);
}

double ToyRoutingPolicy::token_logprob(const SparseFeatures& features, int token,
                                       double temperature) const {
    if (token < 0) {
        throw std::invalid_argument("toy policy: negative token id");
    }
    if (token < kRouteCount) {
        return head_logprob(route_weights_, kRouteCount, features, token, temperature);
    }
    const int template_index = token - kTemplateTokenBase;
    if (template_index >= template_count()) {
        throw std::invalid_argument("toy policy: token id out of range");
    }
    return head_logprob(template_weights_, template_count(), features, template_index,
                        temperature);
}

ExpertKind ToyRoutingPolicy::route_expert(int route) {
    switch (route) {
        case kRouteText:
            return ExpertKind::Text;
        case kRouteImage:
            return ExpertKind::Image;
        case kRouteTable:
            return ExpertKind::Table;
        default:
            throw std::invalid_argument("toy policy: NULL route has no expert");
    }
}

std::string ToyRoutingPolicy::action_text(int route, int template_index) const {
    if (route == kRouteNull) {
        return "<think>existing knowledge suffices</think><search expert=\"text\">NULL</search>";
    }
    return "<think>route the sub-query to the best expert</think><search expert=\"" +
           to_string(route_expert(route)) + "\">" + templates_.at(template_index) + "</search>";
}

std::string ToyRoutingPolicy::answer_text(int template_index) const {
    return "<answer>" + templates_.at(template_index) + "</answer>";
}

ToyRoutingPolicy::Snapshot ToyRoutingPolicy::take_snapshot() {
    ++epoch_;
    return Snapshot{route_weights_, template_weights_, epoch_};
}

void ToyRoutingPolicy::apply_update(const ToyPolicyGradient& gradient, double learning_rate) {
    if (gradient.route_weights.size() != route_weights_.size() ||
        gradient.template_weights.size() != template_weights_.size()) {
        throw std::invalid_argument("toy policy: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < route_weights_.size(); ++i) {
        route_weights_[i] -= learning_rate * gradient.route_weights[i];
    }
    for (std::size_t i = 0; i < template_weights_.size(); ++i) {
        template_weights_[i] -= learning_rate * gradient.template_weights[i];
    }
}

namespace {

double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_categorical(const std::vector<double>& probabilities, std::mt19937_64& rng) {
    const double u = next_uniform(rng);
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        cumulative += probabilities[i];
        if (u < cumulative) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(probabilities.size()) - 1;
}

}  // namespace

ToyRolloutSource::ToyRolloutSource(const ToyRoutingPolicy& live,
                                   ToyRoutingPolicy::Snapshot snapshot, double temperature,
                                   std::uint64_t seed)
    : live_(live), snapshot_(std::move(snapshot)), temperature_(temperature), rng_(seed) {}

RolloutSample ToyRolloutSource::sample(GroupKind kind, const std::string& conditioning) {
    const auto features = live_.featurize(conditioning);
    RolloutSample sample;
    if (kind == GroupKind::Action) {
        const auto route_probs = ToyRoutingPolicy::head_probabilities(
            snapshot_.route_weights, ToyRoutingPolicy::kRouteCount, features, temperature_);
        const int route = sample_categorical(route_probs, rng_);
        sample.tokens.push_back(route);
        sample.logprob_old.push_back(ToyRoutingPolicy::head_logprob(
            snapshot_.route_weights, ToyRoutingPolicy::kRouteCount, features, route,
            temperature_));
        int template_index = -1;
        if (route != ToyRoutingPolicy::kRouteNull) {
            const auto template_probs = ToyRoutingPolicy::head_probabilities(
                snapshot_.template_weights, live_.template_count(), features, temperature_);
            template_index = sample_categorical(template_probs, rng_);
            sample.tokens.push_back(ToyRoutingPolicy::kTemplateTokenBase + template_index);
            sample.logprob_old.push_back(ToyRoutingPolicy::head_logprob(
                snapshot_.template_weights, live_.template_count(), features, template_index,
                temperature_));
        }
        sample.text = live_.action_text(route, template_index);
    } else {
        const auto template_probs = ToyRoutingPolicy::head_probabilities(
            snapshot_.template_weights, live_.template_count(), features, temperature_);
        const int template_index = sample_categorical(template_probs, rng_);
        sample.tokens.push_back(ToyRoutingPolicy::kTemplateTokenBase + template_index);
        sample.logprob_old.push_back(ToyRoutingPolicy::head_logprob(
            snapshot_.template_weights, live_.template_count(), features, template_index,
            temperature_));
        sample.text = live_.answer_text(template_index);
    }
    sample.logprob_new.reserve(sample.tokens.size());
    for (int token : sample.tokens) {
        sample.logprob_new.push_back(live_.token_logprob(features, token, temperature_));
    }
    return sample;
}

namespace {

double sequence_sum(const std::vector<double>& values) {
    double total = 0.0;
    for (double v : values) {
        total += v;
    }
    return total;
}

void check_snapshot(const ToyRoutingPolicy& policy, const RolloutGroup& group) {
    if (group.snapshot_epoch != policy.snapshot_epoch()) {
        throw StaleSnapshotError(
            "rollout group was drawn from snapshot epoch " +
            std::to_string(group.snapshot_epoch) + " but the policy is at epoch " +
            std::to_string(policy.snapshot_epoch()));
    }
}

}  // namespace

ToyPolicyGradient toy_policy_gradient(const ToyRoutingPolicy& policy,
                                      const std::vector<RolloutGroup>& groups,
                                      const TrainerConfig& config) {
    ToyPolicyGradient gradient;
    gradient.route_weights.assign(policy.route_weights().size(), 0.0);
    gradient.template_weights.assign(policy.template_weights().size(), 0.0);
    const double temperature = config.temperature;
    const double epsilon = config.clip_epsilon;

    for (const auto& group : groups) {
        check_snapshot(policy, group);
        const auto advantages = normalize_advantages(group.rewards);
        const auto features = policy.featurize(group.input_key);
        const auto route_probs = policy.route_probabilities(features, temperature);
        const auto template_probs = policy.template_probabilities(features, temperature);
        const double group_size = static_cast<double>(group.samples.size());

        for (std::size_t k = 0; k < group.samples.size(); ++k) {
            const double advantage = advantages[k];
            if (advantage == 0.0) {
                continue;
            }
            const auto& sample = group.samples[k];
            double logprob_new = 0.0;
            for (int token : sample.tokens) {
                logprob_new += policy.token_logprob(features, token, temperature);
            }
            const double ratio = std::exp(logprob_new - sequence_sum(sample.logprob_old));
            if (!std::isfinite(ratio) || ratio <= 0.0) {
                throw Error("toy_policy_gradient: non-finite probability ratio");
            }
            // When the clip branch of the min is active and binding, the
            // surrogate is constant in theta and the sample drops out.
            if ((advantage > 0.0 && ratio > 1.0 + epsilon) ||
                (advantage < 0.0 && ratio < 1.0 - epsilon)) {
                continue;
            }
            const double coefficient = -(ratio * advantage) / group_size;
            for (int token : sample.tokens) {
                if (token < ToyRoutingPolicy::kRouteCount) {
                    for (const auto& [feature, value] : features) {
                        const std::size_t row =
                            static_cast<std::size_t>(feature) * ToyRoutingPolicy::kRouteCount;
                        for (int c = 0; c < ToyRoutingPolicy::kRouteCount; ++c) {
                            const double indicator = c == token ? 1.0 : 0.0;
                            gradient.route_weights[row + c] +=
                                coefficient * value * (indicator - route_probs[c]) / temperature;
                        }
                    }
                } else {
                    const int template_index = token - ToyRoutingPolicy::kTemplateTokenBase;
                    const int columns = policy.template_count();
                    for (const auto& [feature, value] : features) {
                        const std::size_t row = static_cast<std::size_t>(feature) * columns;
                        for (int c = 0; c < columns; ++c) {
                            const double indicator = c == template_index ? 1.0 : 0.0;
                            gradient.template_weights[row + c] +=
                                coefficient * value * (indicator - template_probs[c]) /
                                temperature;
                        }
                    }
                }
            }
        }
    }
    return gradient;
}

double toy_groups_loss(const ToyRoutingPolicy& policy, const std::vector<RolloutGroup>& groups,
                       const TrainerConfig& config) {
    double total = 0.0;
    for (const auto& group : groups) {
        const auto advantages = normalize_advantages(group.rewards);
        const auto features = policy.featurize(group.input_key);
        double group_total = 0.0;
        for (std::size_t k = 0; k < group.samples.size(); ++k) {
            const auto& sample = group.samples[k];
            double logprob_new = 0.0;
            for (int token : sample.tokens) {
                logprob_new += policy.token_logprob(features, token, config.temperature);
            }
            const double ratio = std::exp(logprob_new - sequence_sum(sample.logprob_old));
            group_total +=
                clipped_surrogate(ratio, advantages[k], config.clip_epsilon) - advantages[k];
        }
        total += -group_total / static_cast<double>(group.samples.size());
    }
    return total;
}

namespace {

struct RouteTally {
    long matched = 0;
    long routed = 0;
};

void tally_route_accuracy(const RolloutGroup& group, const ReasoningStep& golden_step,
                          RouteTally& tally) {
    const auto* golden_search = std::get_if<SearchAction>(&golden_step.action);
    if (golden_search == nullptr) {
        return;
    }
    for (const auto& sample : group.samples) {
        const auto parsed = parse_action(sample.text);
        if (const auto* search = std::get_if<SearchAction>(&parsed.action)) {
            ++tally.routed;
            if (search->expert == golden_search->expert) {
                ++tally.matched;
            }
        }
    }
}

}  // namespace

TrainResult train(ToyRoutingPolicy& policy, const std::vector<GoldenTrajectory>& dataset,
                  const TrainerConfig& trainer_config, const RewardConfig& reward_config,
                  const PromptTemplate& tmpl,
                  const std::function<bool(const IterationMetrics&)>& stop_when) {
    validate(trainer_config);
    validate(reward_config);
    if (dataset.empty()) {
        throw std::invalid_argument("train: dataset must not be empty");
    }
    const auto provider = make_similarity_provider(reward_config.similarity_provider);
    std::mt19937_64 master(trainer_config.seed);

    TrainResult result;
    for (int iteration = 1; iteration <= trainer_config.iterations; ++iteration) {
        auto snapshot = policy.take_snapshot();
        ToyRolloutSource source(policy, std::move(snapshot), trainer_config.temperature,
                                master());

        std::vector<RolloutGroup> groups;
        double loss_sum = 0.0;
        double reward_sum = 0.0;
        long sample_count = 0;
        RouteTally tally;
        IterationMetrics metrics;
        metrics.iteration = iteration;

        for (const auto& golden : dataset) {
            StepwiseResult step_result = stepwise_loss(golden, source, reward_config,
                                                       trainer_config, *provider, tmpl);
            loss_sum += step_result.loss;
            for (std::size_t g = 0; g < step_result.groups.size(); ++g) {
                const auto& group = step_result.groups[g];
                for (double r : group.rewards) {
                    reward_sum += r;
                }
                sample_count += static_cast<long>(group.rewards.size());
                if (group.kind == GroupKind::Action) {
                    tally_route_accuracy(group, golden.trajectory.steps[group.step_index - 1],
                                         tally);
                }
                metrics.groups.push_back({group.kind, group.step_index,
                                          step_result.diagnostics[g].mean_reward});
            }
            for (auto& group : step_result.groups) {
                groups.push_back(std::move(group));
            }
        }

        metrics.loss = loss_sum / static_cast<double>(dataset.size());
        metrics.mean_reward = sample_count > 0 ? reward_sum / sample_count : 0.0;
        metrics.route_accuracy =
            tally.routed > 0 ? static_cast<double>(tally.matched) / tally.routed : 0.0;
        if (!std::isfinite(metrics.loss)) {
            throw TrainDivergenceError("train: non-finite loss at iteration " +
                                           std::to_string(iteration),
                                       std::move(result));
        }

        ToyPolicyGradient gradient = toy_policy_gradient(policy, groups, trainer_config);
        gradient.scale(1.0 / static_cast<double>(dataset.size()));
        const double norm = gradient.l2_norm();
        if (!std::isfinite(norm)) {
            throw TrainDivergenceError("train: non-finite gradient at iteration " +
                                           std::to_string(iteration),
                                       std::move(result));
        }
        if (norm > trainer_config.max_grad_norm) {
            gradient.scale(trainer_config.max_grad_norm / norm);
        }
        double learning_rate = trainer_config.learning_rate;
        if (trainer_config.cosine_lr_decay) {
            const double progress =
                static_cast<double>(iteration - 1) / trainer_config.iterations;
            learning_rate *= 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
        }
        policy.apply_update(gradient, learning_rate);

        result.iterations.push_back(std::move(metrics));
        if (stop_when && stop_when(result.iterations.back())) {
            break;
        }
    }
    return result;
}

ToyPolicyAgent::ToyPolicyAgent(const ToyRoutingPolicy& policy, double temperature,
                               std::uint64_t seed)
    : policy_(policy), temperature_(temperature), rng_(seed) {}

PolicyResponse ToyPolicyAgent::complete(const PolicyRequest& request) {
    const auto features = policy_.featurize(request.prompt);
    const double temperature = temperature_;
    PolicyResponse response;
    std::vector<double> logprobs;
    if (request.kind == RequestKind::Action) {
        const auto route_probs = policy_.route_probabilities(features, temperature);
        const int route = sample_categorical(route_probs, rng_);
        logprobs.push_back(policy_.token_logprob(features, route, temperature));
        int template_index = -1;
        if (route != ToyRoutingPolicy::kRouteNull) {
            const auto template_probs = policy_.template_probabilities(features, temperature);
            template_index = sample_categorical(template_probs, rng_);
            logprobs.push_back(policy_.token_logprob(
                features, ToyRoutingPolicy::kTemplateTokenBase + template_index, temperature));
        }
        response.text = policy_.action_text(route, template_index);
    } else {
        const auto template_probs = policy_.template_probabilities(features, temperature);
        const int template_index = sample_categorical(template_probs, rng_);
        logprobs.push_back(policy_.token_logprob(
            features, ToyRoutingPolicy::kTemplateTokenBase + template_index, temperature));
        response.text = policy_.answer_text(template_index);
    }
    if (request.logprobs_requested) {
        response.token_logprobs = std::move(logprobs);
    }
    return response;
}

void save_toy_policy(const ToyRoutingPolicy& policy, const std::filesystem::path& path) {
    json j{{"vocabulary", policy.vocabulary()},
           {"templates", policy.templates()},
           {"route_weights", policy.route_weights()},
           {"template_weights", policy.template_weights()}};
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write policy file: " + path.string());
    }
    out << j.dump() << "\n";
}

ToyRoutingPolicy load_toy_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open policy file: " + path.string());
    }
    json j;
    try {
        in >> j;
        ToyRoutingPolicy policy(j.at("vocabulary").get<std::vector<std::string>>(),
                                j.at("templates").get<std::vector<std::string>>());
        auto route = j.at("route_weights").get<std::vector<double>>();
        auto templates = j.at("template_weights").get<std::vector<double>>();
        if (route.size() != policy.route_weights().size() ||
            templates.size() != policy.template_weights().size()) {
            throw ParseError("policy file " + path.string() + " has mismatched weight shapes");
        }
        policy.route_weights() = std::move(route);
        policy.template_weights() = std::move(templates);
        return policy;
    } catch (const json::exception& e) {
        throw ParseError("invalid policy file " + path.string() + ": " + e.what());
    }
}

void save_metrics(const TrainResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write metrics file: " + path.string());
    }
    for (const auto& metrics : result.iterations) {
        json j{{"iteration", metrics.iteration},
               {"mean_reward", metrics.mean_reward},
               {"loss", metrics.loss},
               {"route_accuracy", metrics.route_accuracy}};
        out << j.dump() << "\n";
    }
}

}  // namespace remex
