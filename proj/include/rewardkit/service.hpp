#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/judge_io.hpp"
#include "rewardkit/reward_agg.hpp"

namespace httplib {
class Server;
}

namespace rewardkit::service {

enum class Mode { SC, PQ, Full };
std::string_view to_string(Mode m) noexcept;
Mode mode_from_string(std::string_view name);

struct RewardRequest {
    std::string request_id;
    std::string instruction;
    std::vector<std::string> source_refs;
    std::string edited_ref;
    Mode mode = Mode::Full;
    std::optional<agg::AggregationConfig> config_override;

    // Throws MalformedRequest.
    void validate() const;
};

struct StageTiming {
    double sc_ms = 0.0;
    double pq_ms = 0.0;
    double aggregate_ms = 0.0;
    double total_ms = 0.0;
};

struct RewardResponse {
    std::string request_id;
    Mode mode = Mode::Full;
    std::optional<judge::ScorePair> sc_scores;  // (s_if, s_con)
    std::optional<judge::ScorePair> pq_scores;  // (s_nat, s_art)
    std::optional<agg::RewardBreakdown> breakdown;  // Full mode only
    std::vector<judge::EditRegion> regions;
    std::optional<std::string> sc_reasoning;
    std::optional<std::string> pq_reasoning;
    StageTiming timing;
};

// Prompt templates, bundled verbatim.
enum class PromptTemplate { ScSingle, ScMulti, Pq };
std::string_view template_id(PromptTemplate t) noexcept;
std::string_view template_text(PromptTemplate t) noexcept;
PromptTemplate sc_template_for(std::size_t num_sources) noexcept;
std::string assemble_prompt(PromptTemplate t, std::string_view instruction, std::size_t num_sources);

// One judge call: a text prompt followed by images (sources first, edited last).
struct ChatRequest {
    std::string prompt;
    std::vector<std::string> image_refs;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    // Must be safe to call from several threads at once.
    virtual std::string complete(const ChatRequest& req) = 0;
};

// Deterministic stand-in judge. SC prompts (those asking for edit_region) get
// regions + grounded reasoning, everything else gets a PQ payload.
std::string mock_judge(std::string_view prompt, const std::vector<std::string>& refs, std::uint64_t seed);

class MockBackend : public JudgeBackend {
public:
    explicit MockBackend(std::uint64_t seed) : seed_(seed) {}
    std::string complete(const ChatRequest& req) override;

private:
    std::uint64_t seed_;
};

struct MockSpec {
    std::uint64_t seed = 0;
};

struct RemoteSpec {
    std::string endpoint;  // full URL of the chat-completions route
    std::string model = "judge";
    std::string api_key;   // sent as a bearer token, never logged
    int timeout_ms = 60000;
    int max_retries = 3;
    int backoff_base_ms = 200;

    void validate() const;  // ConfigInvalid
};

using JudgeBackendSpec = std::variant<MockSpec, RemoteSpec>;

// Endpoint, key, and model from REWARDKIT_ENDPOINT / REWARDKIT_API_KEY /
// REWARDKIT_MODEL; `endpoint` overrides the environment when non-empty.
RemoteSpec remote_spec_from_env(std::string_view endpoint = {});

struct ParsedUrl {
    std::string scheme;  // http or https
    std::string host;
    int port = 0;
    std::string path;
};
std::optional<ParsedUrl> parse_url(std::string_view url);

// Local file -> data URL; http(s) and data URLs pass through untouched.
std::string image_url_for(const std::string& ref);

nlohmann::json chat_body(const ChatRequest& req, const std::string& model, bool inline_local_files = true);
// Text of choices[0].message.content; throws BackendUnavailable otherwise.
std::string chat_content(std::string_view body);

class RemoteBackend : public JudgeBackend {
public:
    explicit RemoteBackend(RemoteSpec spec);
    std::string complete(const ChatRequest& req) override;

private:
    RemoteSpec spec_;
    ParsedUrl url_;
};

std::unique_ptr<JudgeBackend> make_backend(const JudgeBackendSpec& spec);

// Runs the one or two judge streams the mode needs, parses, aggregates.
// Throws BackendUnavailable, JudgeOutputError, ConfigInvalid, MalformedRequest.
RewardResponse score(const RewardRequest& req, JudgeBackend& backend, const agg::AggregationConfig& cfg);

struct BatchPlan {
    std::map<std::string, std::vector<std::string>> groups;  // prefix key -> request ids
};

std::string prefix_key(const RewardRequest& req);
BatchPlan plan_batch(std::span<const RewardRequest> reqs);

// Wire formats.
RewardRequest request_from_json(const nlohmann::json& j, const agg::AggregationConfig& base);
nlohmann::json to_json(const RewardRequest& req);
nlohmann::json to_json(const RewardResponse& r, const agg::AggregationConfig& cfg, bool with_timing = true);
nlohmann::json to_json(const BatchPlan& plan);
nlohmann::json error_body(ErrorCode code, std::string_view message, std::string_view request_id);
int http_status_for(ErrorCode code) noexcept;

struct MetricsSnapshot {
    std::uint64_t requests = 0;   // reward requests received (batch members count individually)
    std::uint64_t completed = 0;  // images scored successfully
    std::uint64_t failed = 0;
    double mean_latency_ms = 0.0;  // per image
    double throughput = 0.0;       // images per second of wall time
};
nlohmann::json to_json(const MetricsSnapshot& m);

class RewardService {
public:
    RewardService(std::shared_ptr<JudgeBackend> backend, agg::AggregationConfig cfg);
    ~RewardService();

    RewardService(const RewardService&) = delete;
    RewardService& operator=(const RewardService&) = delete;

    // Transport-free handlers: (HTTP status, JSON body).
    std::pair<int, nlohmann::json> handle_score(std::string_view body);
    std::pair<int, nlohmann::json> handle_batch(std::string_view body);
    nlohmann::json health() const;
    MetricsSnapshot metrics() const;

    // Binds and serves on a background thread; port 0 picks a free port.
    // Returns the bound port. Throws BindFailure.
    int start(const std::string& host, int port);
    // Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

private:
    struct Outcome {
        std::optional<RewardResponse> response;
        nlohmann::json error;
        ErrorCode code = ErrorCode::MalformedRequest;
    };
    Outcome run_one(const RewardRequest& req);
    void record(double latency_ms, bool ok, std::chrono::steady_clock::time_point begin);
    void install_routes();
    void bind(const std::string& host, int port);

    std::shared_ptr<JudgeBackend> backend_;
    agg::AggregationConfig cfg_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;

    std::atomic<std::uint64_t> requests_{0};
    std::atomic<std::uint64_t> completed_{0};
    std::atomic<std::uint64_t> failed_{0};
    std::atomic<std::uint64_t> latency_ns_{0};
    mutable std::mutex window_mu_;
    std::optional<std::chrono::steady_clock::time_point> first_begin_;
    std::chrono::steady_clock::time_point last_end_{};
};

}  // namespace rewardkit::service
