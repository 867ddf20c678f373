#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace remex {

/// What the orchestrator is asking the policy for. Text policies see the same
/// information spelled out in the prompt; structured policies (the toy router)
/// use it to pick the right emission form.
enum class RequestKind { Action, IntermediateAnswer, FinalAnswer };

struct PolicyRequest {
    std::string prompt;
    double temperature = 1.0;
    int max_tokens = 512;
    bool logprobs_requested = false;
    RequestKind kind = RequestKind::Action;
};

enum class FinishReason { Stop, Length, Error };

struct PolicyResponse {
    std::string text;
    std::optional<std::vector<double>> token_logprobs;  // all <= 0 when present
    FinishReason finish_reason = FinishReason::Stop;
};

/// One completion per call. Implementations throw TransportError on delivery
/// failure; every other emission, however malformed, is a valid response.
class Policy {
  public:
    virtual ~Policy() = default;
    virtual PolicyResponse complete(const PolicyRequest& request) = 0;
};

/// Deterministic replay policy for tests and offline runs. Entries are served
/// in order; a failure entry throws TransportError; an exhausted queue throws
/// TransportError as well.
class ScriptedPolicy : public Policy {
  public:
    struct Entry {
        std::string text;
        bool fail = false;
    };

    explicit ScriptedPolicy(std::vector<std::string> responses);
    explicit ScriptedPolicy(std::vector<Entry> entries);

    PolicyResponse complete(const PolicyRequest& request) override;

    std::size_t remaining() const { return entries_.size(); }

  private:
    std::deque<Entry> entries_;
};

/// Pure single-pass placeholder substitution. Placeholders look like {name};
/// every placeholder must be bound (error names the missing one); substituted
/// values are emitted verbatim and never re-scanned, so braces inside values
/// are safe.
std::string render_prompt(const std::string& template_text,
                          const std::map<std::string, std::string>& bindings);

struct EndpointConfig {
    std::string base_url;  // e.g. http://localhost:8000
    std::string model;
    std::string api_key;
    int timeout_ms = 30000;
    int retry_cap = 3;
    int backoff_base_ms = 100;
    int concurrency_limit = 4;

    /// Reads REMEX_ENDPOINT, REMEX_MODEL, REMEX_API_KEY.
    static EndpointConfig from_env();
};

/// Transport seam under RemotePolicy so retry/backoff and wire parsing are
/// testable without a network.
class HttpTransport {
  public:
    virtual ~HttpTransport() = default;
    /// POSTs a JSON body, returns the raw JSON response body.
    /// Throws TransportError on connection or HTTP failure.
    virtual std::string post_json(const std::string& path, const std::string& body) = 0;
};

std::unique_ptr<HttpTransport> make_http_transport(const EndpointConfig& config);

/// Chat-completions adapter over an OpenAI-compatible endpoint. Transient
/// transport failures are retried with exponential backoff up to retry_cap;
/// a successful completion is consumed at most once per logical call.
class RemotePolicy : public Policy {
  public:
    /// `sleeper` is injectable for tests; defaults to std::this_thread::sleep_for.
    RemotePolicy(EndpointConfig config, std::unique_ptr<HttpTransport> transport = nullptr,
                 std::function<void(std::chrono::milliseconds)> sleeper = {});
    ~RemotePolicy() override;

    PolicyResponse complete(const PolicyRequest& request) override;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace remex
