// rewardkit: one entry point over every module. JSON/JSONL go to --output (or
// stdout); human-readable tables go to stderr only.
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rewardkit/attn_diag.hpp"
#include "rewardkit/bench_eval.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/grpo.hpp"
#include "rewardkit/judge_io.hpp"
#include "rewardkit/json_text.hpp"
#include "rewardkit/reward_agg.hpp"
#include "rewardkit/service.hpp"

using namespace rewardkit;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << text;
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string input;
    std::string output;
    std::string strategy;
};

agg::AggregationConfig load_config(const Common& c) {
    agg::AggregationConfig cfg;
    if (!c.config.empty()) {
        const json j = json::parse(read_file(c.config), nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::ConfigInvalid, "config file is not valid JSON");
        cfg = agg::config_from_json(j);
    }
    if (!c.strategy.empty()) cfg.strategy = agg::strategy_from_string(c.strategy);
    cfg.validate();
    return cfg;
}

std::shared_ptr<service::JudgeBackend> load_backend(const std::string& kind, const std::string& endpoint,
                                                    std::uint64_t seed) {
    if (kind == "mock") return service::make_backend(service::MockSpec{seed});
    return service::make_backend(service::remote_spec_from_env(endpoint));
}

// ---- score -------------------------------------------------------------

struct ScoreOpts {
    std::string backend = "mock";
    std::string endpoint;
    std::string mode;
    bool with_timings = false;
};

int run_score(const Common& c, const ScoreOpts& o) {
    const auto cfg = load_config(c);
    auto backend = load_backend(o.backend, o.endpoint, c.seed);
    const std::string text = read_file(c.input);

    auto decode = [&](const json& j) {
        auto req = service::request_from_json(j, cfg);
        if (!o.mode.empty()) {
            req.mode = service::mode_from_string(o.mode);
            req.validate();
        }
        return req;
    };
    auto respond = [&](const service::RewardRequest& req) {
        const auto resp = service::score(req, *backend, cfg);
        return service::to_json(resp, req.config_override.value_or(cfg), o.with_timings);
    };

    const json whole = json::parse(text, nullptr, false);
    if (!whole.is_discarded() && whole.is_object()) {
        emit(pretty(respond(decode(whole))), c.output);
        return kOk;
    }

    // JSONL (or a JSON array): one response or error body per request.
    std::vector<json> items;
    if (!whole.is_discarded() && whole.is_array()) {
        items.assign(whole.begin(), whole.end());
    } else {
        for (const auto& [lineno, line] : jsonl_lines(text)) {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw Error(ErrorCode::InvalidInput, "request line " + std::to_string(lineno) + " is not JSON");
            items.push_back(std::move(j));
        }
    }
    json results = json::array();
    std::vector<service::RewardRequest> planned;
    bool any_failed = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::string id = items[i].is_object() ? items[i].value("request_id", "") : "";
        try {
            auto req = decode(items[i]);
            if (req.request_id.empty()) req.request_id = "req-" + std::to_string(i);
            planned.push_back(req);
            results.push_back(respond(req));
        } catch (const Error& e) {
            any_failed = true;
            results.push_back(service::error_body(e.code(), e.what(), id));
        }
    }
    emit(pretty(json{{"results", results}, {"plan", service::to_json(service::plan_batch(planned))}}), c.output);
    return any_failed ? kDomainError : kOk;
}

// ---- bench -------------------------------------------------------------

int run_bench(const Common& c, const std::string& predictions) {
    const auto groups = bench::read_groups_jsonl(read_file(c.input));
    const auto scores = bench::read_predictions_jsonl(read_file(predictions));
    const auto report = bench::evaluate_benchmark(groups, scores);
    std::cerr << bench::format_table(report);
    emit(pretty(bench::to_json(report)), c.output);
    return kOk;
}

// ---- diagnose ----------------------------------------------------------

int run_diagnose(const Common& c) {
    const auto corpus = attn::read_corpus_jsonl(read_file(c.input));
    const auto report = attn::diagnose_corpus(corpus);
    std::cerr << attn::format_table(report);
    emit(pretty(attn::to_json(report)), c.output);
    return kOk;
}

// ---- grid-search -------------------------------------------------------

int run_grid(const Common& c, agg::GridSearchSpec spec) {
    spec.validation = agg::read_preferences_jsonl(read_file(c.input));
    const auto result = agg::grid_search(spec);
    std::fprintf(stderr, "%zu cells; best alpha=%.2f w_con=%.2f accuracy=%.4f\n", result.surface.size(),
                 result.best.alpha, result.best.w_con, result.best_accuracy);
    emit(pretty(agg::to_json(result)), c.output);
    return kOk;
}

// ---- grpo-sim ----------------------------------------------------------

int run_grpo(const Common& c, grpo::SimSpec spec, const std::vector<double>& initial) {
    spec.agg = load_config(c);
    spec.strategy = spec.agg.strategy;
    spec.seed = c.seed;
    if (!initial.empty()) {
        if (initial.size() != 4) throw UsageError("--initial takes four values");
        std::copy(initial.begin(), initial.end(), spec.initial.begin());
    }
    const auto trajectory = grpo::simulate_dynamics(spec);
    if (!trajectory.empty()) {
        const auto& first = trajectory.front();
        const auto& last = trajectory.back();
        std::fprintf(stderr, "%zu steps; mean reward %.4f -> %.4f\n", trajectory.size(), first.mean_reward,
                     last.mean_reward);
    }
    emit(grpo::to_jsonl(trajectory), c.output);
    return kOk;
}

// ---- validate ----------------------------------------------------------

// Corpus lines: {"id": ..., "stream": "sc" | "pq", "raw": "<judge text>"}.
int run_validate(const Common& c, bool refined, const std::string& mode) {
    judge::ParseOptions opts;
    if (!mode.empty()) {
        if (mode == "strict") opts.mode = judge::ParseMode::Strict;
        else if (mode == "clamp") opts.mode = judge::ParseMode::Clamp;
        else throw UsageError("validate --mode is strict or clamp");
    }
    const std::string text = read_file(c.input);
    std::map<std::string, std::size_t> error_counts;
    std::map<std::string, std::size_t> rule_counts;
    json records = json::array();
    std::size_t total = 0, valid = 0;
    for (const auto& [lineno, line] : jsonl_lines(text)) {
        ++total;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("raw") || !j["raw"].is_string())
            throw Error(ErrorCode::InvalidInput, "transcript line " + std::to_string(lineno) + " needs a string 'raw'");
        const std::string id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                                : std::to_string(lineno);
        const std::string stream = j.value("stream", "sc");
        json rec{{"id", id}, {"stream", stream}};
        try {
            if (stream == "pq") {
                judge::parse_pq_output(j["raw"].get<std::string>(), opts);
            } else if (stream == "sc") {
                const auto out = judge::parse_sc_output(j["raw"].get<std::string>(), opts);
                if (refined) {
                    const auto report = judge::validate_refined_reasoning(out.reasoning, out.regions);
                    if (!report.passed()) {
                        json rules = json::array();
                        for (const auto& v : report.violations) {
                            ++rule_counts[std::string(judge::to_string(v.rule))];
                            rules.push_back(std::string(judge::to_string(v.rule)));
                        }
                        rec["ok"] = false;
                        rec["rule_violations"] = rules;
                        records.push_back(rec);
                        continue;
                    }
                }
            } else {
                throw Error(ErrorCode::InvalidInput, "unknown stream '" + stream + "'");
            }
            ++valid;
            rec["ok"] = true;
        } catch (const Error& e) {
            ++error_counts[std::string(to_string(e.code()))];
            rec["ok"] = false;
            rec["error_code"] = std::string(to_string(e.code()));
            rec["message"] = e.what();
        }
        records.push_back(rec);
    }
    json report{{"total", total}, {"valid", valid}, {"invalid", total - valid}, {"errors", error_counts}};
    if (refined) report["rule_violations"] = rule_counts;
    report["records"] = records;

    std::fprintf(stderr, "%zu transcripts, %zu valid\n", total, valid);
    for (const auto& [code, n] : error_counts) std::fprintf(stderr, "  %-24s %zu\n", code.c_str(), n);
    for (const auto& [rule, n] : rule_counts) std::fprintf(stderr, "  rule %-19s %zu\n", rule.c_str(), n);
    emit(pretty(report), c.output);
    return valid == total ? kOk : kDomainError;
}

// ---- serve -------------------------------------------------------------

service::RewardService* g_service = nullptr;

int run_serve(const Common& c, const std::string& bind, const ScoreOpts& o) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw UsageError("--bind expects host:port");
    int port = 0;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw UsageError("--bind port is not a number");
    }
    service::RewardService svc(load_backend(o.backend, o.endpoint, c.seed), load_config(c));
    g_service = &svc;
    std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
    std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
    std::fprintf(stderr, "serving on %s (backend %s)\n", bind.c_str(), o.backend.c_str());
    svc.run(bind.substr(0, colon), port);
    g_service = nullptr;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rewardkit: judge parsing, reward aggregation, GRPO signals, benchmark and attention diagnostics"};
    app.require_subcommand(1);

    Common c;
    auto add_common = [&](CLI::App* sub, bool needs_input) {
        auto* in = sub->add_option("--input,-i", c.input, "input file")->check(CLI::ExistingFile);
        if (needs_input) in->required();
        sub->add_option("--output,-o", c.output, "output file (default stdout)");
        sub->add_option("--config", c.config, "aggregation config JSON")->check(CLI::ExistingFile);
        sub->add_option("--seed", c.seed, "random seed");
        sub->add_option("--strategy", c.strategy, "geometric | bucket-min | arithmetic");
    };

    ScoreOpts so;
    auto* score = app.add_subcommand("score", "score reward requests (JSON object or JSONL)");
    add_common(score, true);
    score->add_option("--mode", so.mode, "override request mode: sc | pq | full");
    score->add_option("--backend", so.backend, "judge backend")->check(CLI::IsMember({"mock", "remote"}));
    score->add_option("--endpoint", so.endpoint, "remote chat-completions URL (else REWARDKIT_ENDPOINT)");
    score->add_flag("--with-timings", so.with_timings, "include per-stage latencies");

    std::string predictions;
    auto* bench_cmd = app.add_subcommand("bench", "evaluate ranking groups against predicted scores");
    add_common(bench_cmd, true);
    bench_cmd->add_option("--predictions,-p", predictions, "predictions JSONL {sample_id, reward}")
        ->required()
        ->check(CLI::ExistingFile);

    auto* diag = app.add_subcommand("diagnose", "attention collapse metrics over a corpus");
    add_common(diag, true);

    agg::GridSearchSpec gs;
    auto* grid = app.add_subcommand("grid-search", "calibrate alpha and w_con on preference pairs");
    add_common(grid, true);
    grid->add_option("--alpha-min", gs.alpha_min);
    grid->add_option("--alpha-max", gs.alpha_max);
    grid->add_option("--w-min", gs.w_min);
    grid->add_option("--w-max", gs.w_max);
    grid->add_option("--step", gs.step);

    grpo::SimSpec sim;
    std::vector<double> initial;
    auto* sim_cmd = app.add_subcommand("grpo-sim", "toy GRPO dynamics under an aggregation strategy");
    add_common(sim_cmd, false);
    sim_cmd->add_option("--steps", sim.steps);
    sim_cmd->add_option("--sigma", sim.sigma);
    sim_cmd->add_option("--eta", sim.eta);
    sim_cmd->add_option("--group-size", sim.grpo.group_size);
    sim_cmd->add_option("--initial", initial, "s_if s_con s_nat s_art")->expected(4);

    bool refined = false;
    std::string parse_mode;
    auto* val = app.add_subcommand("validate", "parse a transcript corpus and count errors");
    add_common(val, true);
    val->add_flag("--refined", refined, "also apply the grounded-reasoning rules to SC transcripts");
    val->add_option("--mode", parse_mode, "strict | clamp (default strict)");

    std::string bind = "127.0.0.1:8080";
    auto* serve = app.add_subcommand("serve", "HTTP reward service");
    add_common(serve, false);
    serve->add_option("--bind", bind, "host:port");
    serve->add_option("--backend", so.backend)->check(CLI::IsMember({"mock", "remote"}));
    serve->add_option("--endpoint", so.endpoint);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsageError;
    }

    try {
        if (*score) return run_score(c, so);
        if (*bench_cmd) return run_bench(c, predictions);
        if (*diag) return run_diagnose(c);
        if (*grid) return run_grid(c, gs);
        if (*sim_cmd) return run_grpo(c, sim, initial);
        if (*val) return run_validate(c, refined, parse_mode);
        if (*serve) return run_serve(c, bind, so);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return kUsageError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    }
    return kUsageError;
}
