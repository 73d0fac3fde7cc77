#pragma once

#include <condition_variable>
#include <mutex>
#include <string>

#include "httplib.h"
#include "shadowsim/genbackend.hpp"

namespace shadowsim {

// HTTP client for a real generation service. Requests carry the rendered
// prompt; temperature is forced to zero so reruns stay comparable. An
// optional observer sees every call (payloads truncated to 4 KiB) so the
// harness can put them on the event log.
class ExternalBackend : public Backend {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/generate";
    int max_in_flight = 4;
    int timeout_seconds = 30;
    bool force_zero_temperature = true;
  };

  using CallObserver =
      std::function<void(const std::string& request_body, const std::string& response_body,
                         int http_status)>;

  ExternalBackend(const TemplateRegistry& templates, Options options,
                  CallObserver observer = nullptr)
      : templates_(templates), options_(std::move(options)), observer_(std::move(observer)) {}

  GenerationResult generate(const GenerationRequest& request) override {
    const PromptTemplate& tmpl = templates_.get(request.template_id);
    std::string prompt = render(tmpl, request.bindings);

    json body{{"prompt", prompt},
              {"max_tokens", request.decode.max_tokens},
              {"temperature",
               options_.force_zero_temperature ? 0.0 : request.decode.temperature},
              {"seed", request.seed}};
    std::string body_text = body.dump();

    InFlightSlot slot(*this);

    auto started = std::chrono::steady_clock::now();
    httplib::Client client(options_.host, options_.port);
    client.set_read_timeout(options_.timeout_seconds, 0);
    client.set_connection_timeout(options_.timeout_seconds, 0);
    auto response = client.Post(options_.path, body_text, "application/json");
    auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - started);

    if (!response) {
      notify(body_text, "", 0);
      throw BackendError("generation service unreachable at " + options_.host + ":" +
                             std::to_string(options_.port),
                         /*retryable=*/true);
    }
    notify(body_text, response->body, response->status);
    if (response->status != 200)
      throw BackendError("generation service returned HTTP " +
                             std::to_string(response->status),
                         /*retryable=*/response->status >= 500);

    json parsed;
    try {
      parsed = json::parse(response->body);
    } catch (const json::exception& ex) {
      throw BackendError(std::string("generation service sent malformed JSON: ") +
                             ex.what(),
                         /*retryable=*/false);
    }
    if (!parsed.contains("text") || !parsed.at("text").is_string())
      throw BackendError("generation service response lacks a 'text' field",
                         /*retryable=*/false);

    GenerationResult result;
    result.text = parsed.at("text").get<std::string>();
    result.backend = BackendKind::external;
    result.latency = elapsed;
    return result;
  }

 private:
  // RAII guard around the in-flight cap.
  struct InFlightSlot {
    explicit InFlightSlot(ExternalBackend& b) : backend(b) {
      std::unique_lock lock(backend.mutex_);
      backend.slot_free_.wait(
          lock, [&] { return backend.in_flight_ < backend.options_.max_in_flight; });
      ++backend.in_flight_;
    }
    ~InFlightSlot() {
      {
        std::lock_guard lock(backend.mutex_);
        --backend.in_flight_;
      }
      backend.slot_free_.notify_one();
    }
    ExternalBackend& backend;
  };

  static std::string truncate_payload(const std::string& s) {
    constexpr std::size_t kMax = 4096;
    if (s.size() <= kMax) return s;
    return s.substr(0, kMax) + "...[truncated " + std::to_string(s.size() - kMax) +
           " bytes]";
  }

  void notify(const std::string& request_body, const std::string& response_body,
              int status) {
    if (observer_) observer_(truncate_payload(request_body), truncate_payload(response_body), status);
  }

  const TemplateRegistry& templates_;
  Options options_;
  CallObserver observer_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
};

}  // namespace shadowsim
