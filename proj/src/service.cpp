#include "rewardkit/service.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iterator>
#include <set>
#include <sstream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "rewardkit/error.hpp"
#include "rewardkit/json_text.hpp"
#include "rewardkit/rng.hpp"
#include "rewardkit_prompts.hpp"

namespace rewardkit::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::size_t kBatchWorkers = 32;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

std::string base64(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string mime_for(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : lower(path.substr(dot + 1));
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "webp") return "image/webp";
    if (ext == "gif") return "image/gif";
    if (ext == "bmp") return "image/bmp";
    return "image/png";
}

// Mock output pieces.
constexpr std::string_view kLabels[] = {"person", "dress",  "sky",    "car",   "dog",  "window",
                                        "tree",   "sign",   "hat",    "table", "lamp", "building"};
constexpr std::string_view kScPhrases[] = {"shows the requested change. ", "was edited as asked. ",
                                           "only partly follows the instruction. ", "looks altered. "};
constexpr std::string_view kGlobalPhrases[] = {"The rest of the scene is preserved.",
                                               "Background and lighting are unchanged.",
                                               "Some unrelated areas drifted slightly.",
                                               "Nothing changed outside the edit."};
constexpr std::string_view kPqPhrases[] = {"Lighting and texture look consistent; no visible artifacts.",
                                           "Edges are slightly soft and shadows disagree in places.",
                                           "Noticeable blending seams and distorted fine detail.",
                                           "Natural overall with minor texture smearing."};

class Lanes {
public:
    explicit Lanes(std::uint64_t base) : base_(base) {}
    std::uint64_t operator()(std::uint64_t lane) const { return splitmix64(base_ ^ splitmix64(lane)); }

private:
    std::uint64_t base_;
};

json region_to_json(const judge::EditRegion& r) {
    return json{{"id", r.id}, {"label", r.label}, {"bbox_2d", {r.bbox.x1, r.bbox.y1, r.bbox.x2, r.bbox.y2}}};
}

json pair_json(const std::optional<judge::ScorePair>& p, const char* a, const char* b) {
    if (!p) return nullptr;
    return json{{a, p->first}, {b, p->second}};
}

ErrorCode code_of(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) return err->code();
    return ErrorCode::MalformedRequest;
}

}  // namespace

std::string_view to_string(Mode m) noexcept {
    switch (m) {
        case Mode::SC: return "sc";
        case Mode::PQ: return "pq";
        case Mode::Full: return "full";
    }
    return "full";
}

Mode mode_from_string(std::string_view name) {
    const std::string s = lower(name);
    if (s == "sc") return Mode::SC;
    if (s == "pq") return Mode::PQ;
    if (s == "full") return Mode::Full;
    throw Error(ErrorCode::MalformedRequest, "unknown mode '" + std::string(name) + "' (sc, pq, full)");
}

void RewardRequest::validate() const {
    if (instruction.empty() && mode != Mode::PQ) throw Error(ErrorCode::MalformedRequest, "instruction is empty");
    if (edited_ref.empty()) throw Error(ErrorCode::MalformedRequest, "edited_ref is empty");
    if (mode != Mode::PQ) {
        if (source_refs.empty()) throw Error(ErrorCode::MalformedRequest, "SC and Full modes need a source image");
        for (const auto& s : source_refs)
            if (s.empty()) throw Error(ErrorCode::MalformedRequest, "empty source ref");
    }
}

std::string_view template_id(PromptTemplate t) noexcept {
    switch (t) {
        case PromptTemplate::ScSingle: return "sc_single";
        case PromptTemplate::ScMulti: return "sc_multi";
        case PromptTemplate::Pq: return "pq";
    }
    return "pq";
}

std::string_view template_text(PromptTemplate t) noexcept {
    switch (t) {
        case PromptTemplate::ScSingle: return prompts::kScSingle;
        case PromptTemplate::ScMulti: return prompts::kScMulti;
        case PromptTemplate::Pq: return prompts::kPq;
    }
    return prompts::kPq;
}

PromptTemplate sc_template_for(std::size_t num_sources) noexcept {
    return num_sources > 1 ? PromptTemplate::ScMulti : PromptTemplate::ScSingle;
}

std::string assemble_prompt(PromptTemplate t, std::string_view instruction, std::size_t num_sources) {
    std::string p(template_text(t));
    // Count first so an instruction containing the placeholder text is left alone.
    if (t == PromptTemplate::ScMulti) replace_all(p, "{num_input_images}", std::to_string(num_sources));
    if (t != PromptTemplate::Pq) replace_all(p, "{EDITING_INSTRUCTION_PLACEHOLDER}", instruction);
    return p;
}

std::string mock_judge(std::string_view prompt, const std::vector<std::string>& refs, std::uint64_t seed) {
    FieldHasher fh;
    fh.add(prompt).add(static_cast<std::uint64_t>(refs.size()));
    for (const auto& r : refs) fh.add(r);
    fh.add(seed);
    const Lanes lane(fh.digest());
    const judge::ScorePair scores{static_cast<double>(lane(0) % 26), static_cast<double>(lane(1) % 26)};

    if (prompt.find("edit_region") == std::string_view::npos) {
        judge::PqOutput out;
        out.reasoning = kPqPhrases[lane(2) % std::size(kPqPhrases)];
        out.scores = scores;
        return judge::serialize_pq(out);
    }

    judge::ScOutput out;
    out.scores = scores;
    const std::size_t n = lane(2) % 4;
    std::string reasoning;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t base = 16 + 8 * i;
        judge::EditRegion r;
        r.id = static_cast<std::int64_t>(i);
        r.label = kLabels[lane(base) % std::size(kLabels)];
        r.bbox.x1 = static_cast<int>(lane(base + 1) % judge::kCoordMax);
        r.bbox.y1 = static_cast<int>(lane(base + 2) % judge::kCoordMax);
        r.bbox.x2 = r.bbox.x1 + 1 + static_cast<int>(lane(base + 3) % static_cast<std::uint64_t>(judge::kCoordMax - r.bbox.x1));
        r.bbox.y2 = r.bbox.y1 + 1 + static_cast<int>(lane(base + 4) % static_cast<std::uint64_t>(judge::kCoordMax - r.bbox.y1));
        reasoning += "The <|bbox_" + std::to_string(i) + "|>" + r.label + " ";
        reasoning += kScPhrases[lane(base + 5) % std::size(kScPhrases)];
        out.regions.push_back(std::move(r));
    }
    if (n == 0) reasoning += "No edited region is visible. ";
    reasoning += "<|global|> ";
    reasoning += kGlobalPhrases[lane(3) % std::size(kGlobalPhrases)];
    out.reasoning = std::move(reasoning);
    return judge::serialize_sc(out);
}

std::string MockBackend::complete(const ChatRequest& req) { return mock_judge(req.prompt, req.image_refs, seed_); }

void RemoteSpec::validate() const {
    const auto url = parse_url(endpoint);
    if (!url) throw Error(ErrorCode::ConfigInvalid, "remote endpoint is not a valid http(s) URL");
    if (max_retries < 0) throw Error(ErrorCode::ConfigInvalid, "max_retries must be >= 0");
    if (timeout_ms <= 0) throw Error(ErrorCode::ConfigInvalid, "timeout must be positive");
    if (backoff_base_ms < 0) throw Error(ErrorCode::ConfigInvalid, "backoff must be >= 0");
}

RemoteSpec remote_spec_from_env(std::string_view endpoint) {
    RemoteSpec s;
    if (const char* e = std::getenv("REWARDKIT_ENDPOINT")) s.endpoint = e;
    if (const char* k = std::getenv("REWARDKIT_API_KEY")) s.api_key = k;
    if (const char* m = std::getenv("REWARDKIT_MODEL")) s.model = m;
    if (!endpoint.empty()) s.endpoint = endpoint;
    return s;
}

std::optional<ParsedUrl> parse_url(std::string_view url) {
    ParsedUrl u;
    const auto sep = url.find("://");
    if (sep == std::string_view::npos) return std::nullopt;
    u.scheme = lower(url.substr(0, sep));
    if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
    std::string_view rest = url.substr(sep + 3);
    const auto slash = rest.find('/');
    std::string_view authority = rest.substr(0, slash);
    u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    u.port = u.scheme == "https" ? 443 : 80;
    if (const auto colon = authority.rfind(':'); colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
        const auto digits = authority.substr(colon + 1);
        if (digits.empty() || digits.size() > 5 ||
            !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            return std::nullopt;
        u.port = std::stoi(std::string(digits));
        if (u.port <= 0 || u.port > 65535) return std::nullopt;
        authority = authority.substr(0, colon);
    }
    if (authority.empty() || authority.find_first_of(" @") != std::string_view::npos) return std::nullopt;
    u.host = authority;
    return u;
}

std::string image_url_for(const std::string& ref) {
    if (ref.starts_with("http://") || ref.starts_with("https://") || ref.starts_with("data:")) return ref;
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw Error(ErrorCode::MalformedRequest, "cannot read image '" + ref + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return "data:" + mime_for(ref) + ";base64," + base64(bytes);
}

json chat_body(const ChatRequest& req, const std::string& model, bool inline_local_files) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", req.prompt}});
    for (const auto& ref : req.image_refs)
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", inline_local_files ? image_url_for(ref) : ref}}}});
    return json{{"model", model},
                {"temperature", 0},
                {"messages", json::array({json{{"role", "user"}, {"content", std::move(content)}}})}};
}

std::string chat_content(std::string_view body) {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(ErrorCode::BackendUnavailable, "backend response is not JSON");
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        // Some servers return content parts; join the text ones.
        std::string text;
        for (const auto& part : content)
            if (part.value("type", "") == "text") text += part.value("text", "");
        return text;
    } catch (const json::exception&) {
        throw Error(ErrorCode::BackendUnavailable, "backend response has no choices[0].message.content");
    }
}

RemoteBackend::RemoteBackend(RemoteSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    url_ = *parse_url(spec_.endpoint);
}

std::string RemoteBackend::complete(const ChatRequest& req) {
    const std::string body = chat_body(req, spec_.model).dump();
    httplib::Headers headers;
    if (!spec_.api_key.empty()) headers.emplace("Authorization", "Bearer " + spec_.api_key);

    Rng jitter(FieldHasher().add(req.prompt).add(static_cast<std::uint64_t>(Clock::now().time_since_epoch().count())).digest());
    std::string last_problem;
    for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double base = spec_.backoff_base_ms * std::ldexp(1.0, attempt - 1);
            const auto wait = std::chrono::duration<double, std::milli>(base * (0.5 + jitter.uniform01()));
            std::this_thread::sleep_for(wait);
        }
        httplib::Client cli(url_.scheme + "://" + url_.host + ":" + std::to_string(url_.port));
        const auto timeout = std::chrono::milliseconds(spec_.timeout_ms);
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        cli.set_write_timeout(timeout);
        auto res = cli.Post(url_.path, headers, body, "application/json");
        if (!res) {
            last_problem = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return chat_content(res->body);
        last_problem = "HTTP " + std::to_string(res->status);
        // Client errors other than rate limiting will not fix themselves.
        if (res->status != 429 && res->status < 500) break;
    }
    throw Error(ErrorCode::BackendUnavailable, "judge endpoint failed: " + last_problem);
}

std::unique_ptr<JudgeBackend> make_backend(const JudgeBackendSpec& spec) {
    if (const auto* m = std::get_if<MockSpec>(&spec)) return std::make_unique<MockBackend>(m->seed);
    return std::make_unique<RemoteBackend>(std::get<RemoteSpec>(spec));
}

RewardResponse score(const RewardRequest& req, JudgeBackend& backend, const agg::AggregationConfig& base_cfg) {
    const auto t0 = Clock::now();
    req.validate();
    const agg::AggregationConfig cfg = req.config_override.value_or(base_cfg);
    cfg.validate();

    RewardResponse resp;
    resp.request_id = req.request_id;
    resp.mode = req.mode;

    auto run_sc = [&] {
        const auto t = Clock::now();
        ChatRequest chat{assemble_prompt(sc_template_for(req.source_refs.size()), req.instruction, req.source_refs.size()),
                         req.source_refs};
        chat.image_refs.push_back(req.edited_ref);
        std::string raw = backend.complete(chat);
        judge::ScOutput out;
        try {
            out = judge::parse_sc_output(raw);
        } catch (const Error& e) {
            throw JudgeOutputError(e.code(), std::move(raw), std::string("SC stream: ") + e.what());
        }
        return std::pair{std::move(out), ms_since(t)};
    };
    auto run_pq = [&] {
        const auto t = Clock::now();
        const ChatRequest chat{assemble_prompt(PromptTemplate::Pq, {}, 0), {req.edited_ref}};
        std::string raw = backend.complete(chat);
        judge::PqOutput out;
        try {
            out = judge::parse_pq_output(raw);
        } catch (const Error& e) {
            throw JudgeOutputError(e.code(), std::move(raw), std::string("PQ stream: ") + e.what());
        }
        return std::pair{std::move(out), ms_since(t)};
    };

    std::optional<std::pair<judge::ScOutput, double>> sc;
    std::optional<std::pair<judge::PqOutput, double>> pq;
    if (req.mode == Mode::Full) {
        auto pq_future = std::async(std::launch::async, run_pq);
        std::exception_ptr sc_error;
        try {
            sc = run_sc();
        } catch (...) {
            sc_error = std::current_exception();
        }
        pq = pq_future.get();  // joins before any rethrow
        if (sc_error) std::rethrow_exception(sc_error);
    } else if (req.mode == Mode::SC) {
        sc = run_sc();
    } else {
        pq = run_pq();
    }

    if (sc) {
        resp.sc_scores = sc->first.scores;
        resp.regions = std::move(sc->first.regions);
        resp.sc_reasoning = std::move(sc->first.reasoning);
        resp.timing.sc_ms = sc->second;
    }
    if (pq) {
        resp.pq_scores = pq->first.scores;
        resp.pq_reasoning = std::move(pq->first.reasoning);
        resp.timing.pq_ms = pq->second;
    }
    if (sc && pq) {
        const auto t = Clock::now();
        const agg::SubScores s{resp.sc_scores->first, resp.sc_scores->second, resp.pq_scores->first,
                               resp.pq_scores->second};
        resp.breakdown = agg::aggregate(s, cfg);
        resp.timing.aggregate_ms = ms_since(t);
    }
    resp.timing.total_ms = ms_since(t0);
    return resp;
}

std::string prefix_key(const RewardRequest& req) {
    FieldHasher fh;
    if (req.mode == Mode::PQ) {
        // The PQ prompt carries no instruction and sees only the edited image.
        fh.add(template_id(PromptTemplate::Pq)).add(std::string_view{}).add(std::uint64_t{0});
    } else {
        fh.add(template_id(sc_template_for(req.source_refs.size()))).add(req.instruction);
        fh.add(static_cast<std::uint64_t>(req.source_refs.size()));
        for (const auto& s : req.source_refs) fh.add(s);
    }
    return hex64(fh.digest());
}

BatchPlan plan_batch(std::span<const RewardRequest> reqs) {
    BatchPlan plan;
    for (const auto& r : reqs) plan.groups[prefix_key(r)].push_back(r.request_id);
    return plan;
}

RewardRequest request_from_json(const json& j, const agg::AggregationConfig& base) {
    if (!j.is_object()) throw Error(ErrorCode::MalformedRequest, "request must be a JSON object");
    static const std::set<std::string> known = {"request_id", "instruction", "source_refs",    "source_ref",
                                                "edited_ref", "mode",        "config_override"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key())) throw Error(ErrorCode::MalformedRequest, "unknown request field '" + it.key() + "'");

    auto text = [&](const char* key, bool required) -> std::string {
        if (!j.contains(key)) {
            if (required) throw Error(ErrorCode::MalformedRequest, std::string("missing '") + key + "'");
            return {};
        }
        if (!j[key].is_string()) throw Error(ErrorCode::MalformedRequest, std::string("'") + key + "' must be a string");
        return j[key].get<std::string>();
    };

    RewardRequest r;
    r.request_id = text("request_id", false);
    r.mode = j.contains("mode") ? mode_from_string(text("mode", true)) : Mode::Full;
    r.instruction = text("instruction", r.mode != Mode::PQ);
    r.edited_ref = text("edited_ref", true);
    if (j.contains("source_refs")) {
        if (!j["source_refs"].is_array()) throw Error(ErrorCode::MalformedRequest, "'source_refs' must be an array");
        for (const auto& s : j["source_refs"]) {
            if (!s.is_string()) throw Error(ErrorCode::MalformedRequest, "source refs must be strings");
            r.source_refs.push_back(s.get<std::string>());
        }
    } else if (j.contains("source_ref")) {
        r.source_refs.push_back(text("source_ref", true));
    }
    if (j.contains("config_override") && !j["config_override"].is_null()) {
        const auto& o = j["config_override"];
        if (!o.is_object()) throw Error(ErrorCode::ConfigInvalid, "config_override must be an object");
        json merged = agg::to_json(base);
        for (auto it = o.begin(); it != o.end(); ++it) merged[it.key()] = it.value();
        r.config_override = agg::config_from_json(merged);
    }
    r.validate();
    return r;
}

json to_json(const RewardRequest& req) {
    json j{{"request_id", req.request_id}, {"instruction", req.instruction}, {"source_refs", req.source_refs},
           {"edited_ref", req.edited_ref}, {"mode", std::string(to_string(req.mode))}};
    if (req.config_override) j["config_override"] = agg::to_json(*req.config_override);
    return j;
}

json to_json(const RewardResponse& r, const agg::AggregationConfig& cfg, bool with_timing) {
    json j;
    j["request_id"] = r.request_id;
    j["mode"] = std::string(to_string(r.mode));
    j["breakdown"] = r.breakdown ? agg::to_json(*r.breakdown, cfg) : json(nullptr);
    j["sc_scores"] = pair_json(r.sc_scores, "s_if", "s_con");
    j["pq_scores"] = pair_json(r.pq_scores, "s_nat", "s_art");
    j["regions"] = json::array();
    for (const auto& reg : r.regions) j["regions"].push_back(region_to_json(reg));
    j["sc_reasoning"] = r.sc_reasoning ? json(*r.sc_reasoning) : json(nullptr);
    j["pq_reasoning"] = r.pq_reasoning ? json(*r.pq_reasoning) : json(nullptr);
    if (with_timing)
        j["timing_ms"] = json{{"sc", r.timing.sc_ms},
                              {"pq", r.timing.pq_ms},
                              {"aggregate", r.timing.aggregate_ms},
                              {"total", r.timing.total_ms}};
    return j;
}

json to_json(const BatchPlan& plan) {
    json groups = json::array();
    for (const auto& [key, ids] : plan.groups) groups.push_back(json{{"prefix_key", key}, {"request_ids", ids}});
    return json{{"groups", std::move(groups)}};
}

json error_body(ErrorCode code, std::string_view message, std::string_view request_id) {
    return json{{"error_code", std::string(to_string(code))},
                {"message", std::string(message)},
                {"request_id", std::string(request_id)}};
}

int http_status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::BackendUnavailable:
        case ErrorCode::JudgeOutputInvalid: return 502;
        default: return 400;
    }
}

json to_json(const MetricsSnapshot& m) {
    return json{{"requests", m.requests},
                {"completed", m.completed},
                {"failed", m.failed},
                {"mean_latency_ms_per_image", m.mean_latency_ms},
                {"throughput_images_per_s", m.throughput}};
}

RewardService::RewardService(std::shared_ptr<JudgeBackend> backend, agg::AggregationConfig cfg)
    : backend_(std::move(backend)), cfg_(cfg) {
    cfg_.validate();
}

RewardService::~RewardService() { stop(); }

void RewardService::record(double latency_ms, bool ok, Clock::time_point begin) {
    if (ok) {
        completed_.fetch_add(1, std::memory_order_relaxed);
        latency_ns_.fetch_add(static_cast<std::uint64_t>(latency_ms * 1e6), std::memory_order_relaxed);
    } else {
        failed_.fetch_add(1, std::memory_order_relaxed);
    }
    const auto end = Clock::now();
    std::lock_guard lock(window_mu_);
    if (!first_begin_ || begin < *first_begin_) first_begin_ = begin;
    if (end > last_end_) last_end_ = end;
}

RewardService::Outcome RewardService::run_one(const RewardRequest& req) {
    const auto begin = Clock::now();
    try {
        auto resp = score(req, *backend_, cfg_);
        record(resp.timing.total_ms, true, begin);
        return Outcome{std::move(resp), nullptr};
    } catch (const std::exception& e) {
        record(0.0, false, begin);
        return Outcome{std::nullopt, error_body(code_of(e), e.what(), req.request_id), code_of(e)};
    }
}

std::pair<int, json> RewardService::handle_score(std::string_view body) {
    requests_.fetch_add(1, std::memory_order_relaxed);
    const json j = json::parse(body, nullptr, false);
    std::string id;
    if (j.is_object() && j.contains("request_id") && j["request_id"].is_string()) id = j["request_id"].get<std::string>();
    RewardRequest req;
    try {
        if (j.is_discarded()) throw Error(ErrorCode::MalformedRequest, "body is not valid JSON");
        req = request_from_json(j, cfg_);
    } catch (const std::exception& e) {
        record(0.0, false, Clock::now());
        const auto code = code_of(e);
        return {http_status_for(code), error_body(code, e.what(), id)};
    }
    auto out = run_one(req);
    if (out.response) {
        const auto& cfg = req.config_override ? *req.config_override : cfg_;
        return {200, to_json(*out.response, cfg)};
    }
    return {http_status_for(out.code), out.error};
}

std::pair<int, json> RewardService::handle_batch(std::string_view body) {
    const json j = json::parse(body, nullptr, false);
    const json* list = nullptr;
    if (!j.is_discarded()) {
        if (j.is_array()) list = &j;
        else if (j.is_object() && j.contains("requests") && j["requests"].is_array()) list = &j["requests"];
    }
    if (!list) {
        requests_.fetch_add(1, std::memory_order_relaxed);
        record(0.0, false, Clock::now());
        return {400, error_body(ErrorCode::MalformedRequest, "batch body must be an array or {\"requests\": [...]}", "")};
    }
    const std::size_t n = list->size();
    requests_.fetch_add(n, std::memory_order_relaxed);

    // Decode everything first; a bad member only poisons its own slot.
    std::vector<std::optional<RewardRequest>> reqs(n);
    std::vector<json> results(n);
    std::vector<RewardRequest> planned;
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < n; ++i) {
        const json& item = (*list)[i];
        std::string id;
        if (item.is_object() && item.contains("request_id") && item["request_id"].is_string())
            id = item["request_id"].get<std::string>();
        try {
            auto r = request_from_json(item, cfg_);
            if (r.request_id.empty()) r.request_id = "req-" + std::to_string(i);
            if (!seen_ids.insert(r.request_id).second)
                throw Error(ErrorCode::MalformedRequest, "duplicate request_id '" + r.request_id + "' in batch");
            planned.push_back(r);
            reqs[i] = std::move(r);
        } catch (const std::exception& e) {
            record(0.0, false, Clock::now());
            results[i] = error_body(code_of(e), e.what(), id);
        }
    }
    const BatchPlan plan = plan_batch(planned);

    // A bounded pool pulls slots in order; judge calls are I/O bound, so this
    // is sized for latency hiding rather than cores.
    std::vector<std::optional<Outcome>> outcomes(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;)
            if (reqs[i]) outcomes[i] = run_one(*reqs[i]);
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min<std::size_t>(n, kBatchWorkers); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < n; ++i) {
        if (!reqs[i]) continue;
        auto& out = *outcomes[i];
        if (out.response) {
            const auto& cfg = reqs[i]->config_override ? *reqs[i]->config_override : cfg_;
            results[i] = to_json(*out.response, cfg);
        } else {
            results[i] = std::move(out.error);
        }
    }
    return {200, json{{"results", std::move(results)}, {"plan", to_json(plan)}}};
}

json RewardService::health() const { return json{{"status", "ok"}}; }

MetricsSnapshot RewardService::metrics() const {
    MetricsSnapshot m;
    m.requests = requests_.load();
    m.completed = completed_.load();
    m.failed = failed_.load();
    if (m.completed) m.mean_latency_ms = static_cast<double>(latency_ns_.load()) / 1e6 / static_cast<double>(m.completed);
    std::lock_guard lock(window_mu_);
    if (first_begin_ && m.completed) {
        const double secs = std::chrono::duration<double>(last_end_ - *first_begin_).count();
        if (secs > 0.0) m.throughput = static_cast<double>(m.completed) / secs;
    }
    return m;
}

void RewardService::install_routes() {
    auto reply = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    server_->Post("/v1/score", [this, reply](const httplib::Request& req, httplib::Response& res) {
        auto [status, body] = handle_score(req.body);
        reply(res, status, body);
    });
    server_->Post("/v1/score_batch", [this, reply](const httplib::Request& req, httplib::Response& res) {
        auto [status, body] = handle_batch(req.body);
        reply(res, status, body);
    });
    server_->Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, 200, health()); });
    server_->Get("/metrics", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, to_json(metrics()));
    });
    server_->set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        reply(res, 500, error_body(ErrorCode::MalformedRequest, msg, ""));
    });
}

void RewardService::bind(const std::string& host, int port) {
    if (server_) throw Error(ErrorCode::BindFailure, "service is already running");
    server_ = std::make_unique<httplib::Server>();
    // httplib defaults to SO_REUSEPORT, which lets a second instance share the
    // port silently. Address reuse alone still allows fast restarts.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    install_routes();
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ <= 0) {
        server_.reset();
        throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    }
}

int RewardService::start(const std::string& host, int port) {
    bind(host, port);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void RewardService::run(const std::string& host, int port) {
    bind(host, port);
    server_->listen_after_bind();
}

void RewardService::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace rewardkit::service
