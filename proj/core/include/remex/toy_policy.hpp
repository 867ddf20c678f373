#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "remex/grpo.hpp"
#include "remex/llm_client.hpp"

namespace remex {

struct ToyPolicyGradient {
    std::vector<double> route_weights;
    std::vector<double> template_weights;

    double l2_norm() const;
    void scale(double factor);
};

/// A differentiable stand-in for the policy model: a linear softmax router
/// over bag-of-terms query features. One head picks the routing action
/// (text, image, table, or NULL) and one head picks an emission string from
/// a closed template set, which serves both as the sub-query space and the
/// answer space. Token ids: 0..3 are routes, 4.. are template indices + 4.
class ToyRoutingPolicy {
  public:
    static constexpr int kRouteCount = 4;
    static constexpr int kRouteText = 0;
    static constexpr int kRouteImage = 1;
    static constexpr int kRouteTable = 2;
    static constexpr int kRouteNull = 3;
    static constexpr int kTemplateTokenBase = 4;

    using SparseFeatures = std::vector<std::pair<int, double>>;

    /// Weights start at zero, i.e. uniform routing and uniform emissions.
    ToyRoutingPolicy(std::vector<std::string> vocabulary, std::vector<std::string> templates);

    /// Term counts over the fixed vocabulary plus a constant bias feature.
    /// Out-of-vocabulary tokens are ignored.
    SparseFeatures featurize(const std::string& text) const;

    int vocabulary_size() const { return static_cast<int>(vocabulary_.size()); }
    int template_count() const { return static_cast<int>(templates_.size()); }
    int feature_count() const { return vocabulary_size() + 1; }

    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    const std::vector<std::string>& templates() const { return templates_; }

    std::vector<double>& route_weights() { return route_weights_; }
    const std::vector<double>& route_weights() const { return route_weights_; }
    std::vector<double>& template_weights() { return template_weights_; }
    const std::vector<double>& template_weights() const { return template_weights_; }

    std::vector<double> route_probabilities(const SparseFeatures& features,
                                            double temperature) const;
    std::vector<double> template_probabilities(const SparseFeatures& features,
                                               double temperature) const;
    double token_logprob(const SparseFeatures& features, int token, double temperature) const;

    static ExpertKind route_expert(int route);  // route must not be kRouteNull
    std::string action_text(int route, int template_index) const;  // template ignored for NULL
    std::string answer_text(int template_index) const;

    struct Snapshot {
        std::vector<double> route_weights;
        std::vector<double> template_weights;
        std::uint64_t epoch = 0;
    };

    /// Freezes the current parameters as the old policy and advances the
    /// snapshot epoch; rollout groups drawn from earlier snapshots become
    /// stale.
    Snapshot take_snapshot();
    std::uint64_t snapshot_epoch() const { return epoch_; }

    /// One descent step: theta <- theta - learning_rate * gradient.
    void apply_update(const ToyPolicyGradient& gradient, double learning_rate);

    static std::vector<double> head_probabilities(const std::vector<double>& weights,
                                                  int column_count,
                                                  const SparseFeatures& features,
                                                  double temperature);
    static double head_logprob(const std::vector<double>& weights, int column_count,
                               const SparseFeatures& features, int index, double temperature);

  private:
    std::vector<std::string> vocabulary_;
    std::vector<std::string> templates_;
    std::unordered_map<std::string, int> vocabulary_index_;
    std::vector<double> route_weights_;     // feature_count() x kRouteCount, row-major
    std::vector<double> template_weights_;  // feature_count() x template_count()
    std::uint64_t epoch_ = 0;
};

/// Draws emissions from a frozen snapshot while scoring them under the live
/// policy, as the stepwise sampler requires.
class ToyRolloutSource : public RolloutSource {
  public:
    ToyRolloutSource(const ToyRoutingPolicy& live, ToyRoutingPolicy::Snapshot snapshot,
                     double temperature, std::uint64_t seed);

    RolloutSample sample(GroupKind kind, const std::string& conditioning) override;
    std::uint64_t snapshot_epoch() const override { return snapshot_.epoch; }

  private:
    const ToyRoutingPolicy& live_;
    ToyRoutingPolicy::Snapshot snapshot_;
    double temperature_;
    std::mt19937_64 rng_;
};

/// Exact analytic gradient of the summed GRPO losses over `groups` with
/// respect to the live policy parameters. Samples on the binding side of the
/// clip contribute nothing through the ratio. Throws StaleSnapshotError when
/// a group was drawn from a superseded snapshot.
ToyPolicyGradient toy_policy_gradient(const ToyRoutingPolicy& policy,
                                      const std::vector<RolloutGroup>& groups,
                                      const TrainerConfig& config);

/// The same summed loss recomputed against the live parameters; the
/// finite-difference oracle differentiates this.
double toy_groups_loss(const ToyRoutingPolicy& policy, const std::vector<RolloutGroup>& groups,
                       const TrainerConfig& config);

struct GroupMetric {
    GroupKind kind = GroupKind::Action;
    int step_index = 0;
    double mean_reward = 0.0;
};

struct IterationMetrics {
    int iteration = 0;        // 1-based
    double mean_reward = 0.0; // over every sampled emission this iteration
    double loss = 0.0;        // mean stepwise loss per trajectory
    double route_accuracy = 0.0;  // correct expert among expert-routing emissions
    std::vector<GroupMetric> groups;
};

struct TrainResult {
    std::vector<IterationMetrics> iterations;
};

/// Raised when an iteration produces a non-finite loss; carries the metrics
/// collected so far.
class TrainDivergenceError : public Error {
  public:
    TrainDivergenceError(const std::string& message, TrainResult partial)
        : Error(message), partial_(std::move(partial)) {}

    const TrainResult& partial_result() const { return partial_; }

  private:
    TrainResult partial_;
};

/// Step-wise group-relative training of the toy policy: per iteration take a
/// snapshot, sample G rollouts for every conditioning point of every golden
/// trajectory, compute rewards and the analytic gradient, then apply one
/// norm-clipped descent step. The learning rate follows cosine decay over the
/// configured iteration count when enabled. `stop_when` may end training
/// early after an iteration's metrics are recorded.
TrainResult train(ToyRoutingPolicy& policy, const std::vector<GoldenTrajectory>& dataset,
                  const TrainerConfig& trainer_config, const RewardConfig& reward_config,
                  const PromptTemplate& tmpl = default_prompt_template(),
                  const std::function<bool(const IterationMetrics&)>& stop_when = {});

/// Inference adapter so episodes and evaluation can drive the toy policy
/// through the ordinary Policy interface.
class ToyPolicyAgent : public Policy {
  public:
    ToyPolicyAgent(const ToyRoutingPolicy& policy, double temperature, std::uint64_t seed);

    PolicyResponse complete(const PolicyRequest& request) override;

  private:
    const ToyRoutingPolicy& policy_;
    double temperature_;
    std::mt19937_64 rng_;
};

void save_toy_policy(const ToyRoutingPolicy& policy, const std::filesystem::path& path);
ToyRoutingPolicy load_toy_policy(const std::filesystem::path& path);

/// Metrics persistence: one {iteration, mean_reward, loss, route_accuracy}
/// record per line.
void save_metrics(const TrainResult& result, const std::filesystem::path& path);

}  // namespace remex
