#include "remex/llm_client.hpp"

#include <cctype>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "remex/errors.hpp"

namespace remex {

using nlohmann::json;

ScriptedPolicy::ScriptedPolicy(std::vector<std::string> responses) {
    for (auto& text : responses) {
        entries_.push_back({std::move(text), false});
    }
}

ScriptedPolicy::ScriptedPolicy(std::vector<Entry> entries)
    : entries_(entries.begin(), entries.end()) {}

PolicyResponse ScriptedPolicy::complete(const PolicyRequest&) {
    if (entries_.empty()) {
        throw TransportError("scripted policy exhausted");
    }
    Entry entry = std::move(entries_.front());
    entries_.pop_front();
    if (entry.fail) {
        throw TransportError("scripted policy failure");
    }
    return {entry.text, std::nullopt, FinishReason::Stop};
}

namespace {

bool is_placeholder_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_placeholder_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

std::string render_prompt(const std::string& template_text,
                          const std::map<std::string, std::string>& bindings) {
    std::string out;
    out.reserve(template_text.size());
    std::size_t i = 0;
    while (i < template_text.size()) {
        const char c = template_text[i];
        if (c != '{') {
            out.push_back(c);
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (j < template_text.size() && is_placeholder_start(template_text[j])) {
            ++j;
            while (j < template_text.size() && is_placeholder_char(template_text[j])) {
                ++j;
            }
        }
        if (j > i + 1 && j < template_text.size() && template_text[j] == '}') {
            const std::string name = template_text.substr(i + 1, j - i - 1);
            auto it = bindings.find(name);
            if (it == bindings.end()) {
                throw ConfigError("render_prompt: unbound placeholder \"" + name + "\"");
            }
            out.append(it->second);
            i = j + 1;
        } else {
            out.push_back(c);
            ++i;
        }
    }
    return out;
}

EndpointConfig EndpointConfig::from_env() {
    EndpointConfig config;
    if (const char* url = std::getenv("REMEX_ENDPOINT")) {
        config.base_url = url;
    }
    if (const char* model = std::getenv("REMEX_MODEL")) {
        config.model = model;
    }
    if (const char* key = std::getenv("REMEX_API_KEY")) {
        config.api_key = key;
    }
    return config;
}

namespace {

class HttplibTransport : public HttpTransport {
  public:
    explicit HttplibTransport(const EndpointConfig& config)
        : client_(config.base_url), api_key_(config.api_key) {
        client_.set_connection_timeout(0, config.timeout_ms * 1000);
        client_.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    }

    std::string post_json(const std::string& path, const std::string& body) override {
        httplib::Headers headers;
        if (!api_key_.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key_);
        }
        auto result = client_.Post(path, headers, body, "application/json");
        if (!result) {
            throw TransportError("http request failed: " + httplib::to_string(result.error()));
        }
        if (result->status < 200 || result->status >= 300) {
            throw TransportError("http status " + std::to_string(result->status) + ": " +
                                 result->body);
        }
        return result->body;
    }

  private:
    httplib::Client client_;
    std::string api_key_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const EndpointConfig& config) {
    return std::make_unique<HttplibTransport>(config);
}

struct RemotePolicy::Impl {
    EndpointConfig config;
    std::unique_ptr<HttpTransport> transport;
    std::function<void(std::chrono::milliseconds)> sleeper;
    std::counting_semaphore<> slots;

    Impl(EndpointConfig cfg, std::unique_ptr<HttpTransport> tp,
         std::function<void(std::chrono::milliseconds)> sl)
        : config(std::move(cfg)),
          transport(std::move(tp)),
          sleeper(std::move(sl)),
          slots(std::max(1, config.concurrency_limit)) {}
};

RemotePolicy::RemotePolicy(EndpointConfig config, std::unique_ptr<HttpTransport> transport,
                           std::function<void(std::chrono::milliseconds)> sleeper) {
    if (config.base_url.empty()) {
        throw ConfigError("remote policy needs an endpoint URL (set REMEX_ENDPOINT)");
    }
    if (config.model.empty()) {
        throw ConfigError("remote policy needs a model name (set REMEX_MODEL)");
    }
    if (!transport) {
        transport = make_http_transport(config);
    }
    if (!sleeper) {
        sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    impl_ = std::make_unique<Impl>(std::move(config), std::move(transport), std::move(sleeper));
}

RemotePolicy::~RemotePolicy() = default;

namespace {

PolicyResponse parse_completion(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw TransportError(std::string("unparseable completion response: ") + e.what());
    }
    PolicyResponse response;
    try {
        const auto& choice = j.at("choices").at(0);
        response.text = choice.at("message").at("content").get<std::string>();
        const std::string reason = choice.value("finish_reason", "stop");
        if (reason == "stop") {
            response.finish_reason = FinishReason::Stop;
        } else if (reason == "length") {
            response.finish_reason = FinishReason::Length;
        } else {
            response.finish_reason = FinishReason::Error;
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content")) {
            std::vector<double> logprobs;
            for (const auto& item : choice["logprobs"]["content"]) {
                logprobs.push_back(std::min(0.0, item.at("logprob").get<double>()));
            }
            response.token_logprobs = std::move(logprobs);
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what());
    }
    return response;
}

}  // namespace

PolicyResponse RemotePolicy::complete(const PolicyRequest& request) {
    json body{
        {"model", impl_->config.model},
        {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    if (request.logprobs_requested) {
        body["logprobs"] = true;
    }
    const std::string payload = body.dump();

    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<>& slots;
        ~Release() { slots.release(); }
    } release{impl_->slots};

    std::chrono::milliseconds backoff(impl_->config.backoff_base_ms);
    for (int attempt = 0;; ++attempt) {
        try {
            const std::string response_body =
                impl_->transport->post_json("/v1/chat/completions", payload);
            return parse_completion(response_body);
        } catch (const TransportError&) {
            if (attempt >= impl_->config.retry_cap) {
                throw;
            }
            impl_->sleeper(backoff);
            backoff *= 2;
        }
    }
}

}  // namespace remex
