#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = std::string(REWARDKIT_SOURCE_DIR) + "/testdata/";

struct Run {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run rk(const std::string& args) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / ("rk_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto out = dir / ("out" + std::to_string(counter));
    const auto err = dir / ("err" + std::to_string(counter++));
    const std::string cmd = std::string("\"") + REWARDKIT_CLI + "\" " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

}  // namespace

TEST_CASE("bench: oracle predictions score perfectly, constants score zero") {
    const auto r = rk("bench -i " + kData + "groups.jsonl -p " + kData + "predictions_oracle.jsonl");
    REQUIRE(r.exit_code == 0);
    const auto j = json::parse(r.out);
    for (const char* k : {"accuracy_2p", "accuracy_3p", "accuracy_4p", "overall", "mean_tau"}) CHECK(j[k] == 1.0);

    const auto c = rk("bench -i " + kData + "groups.jsonl --predictions " + kData + "predictions_constant.jsonl");
    REQUIRE(c.exit_code == 0);
    const auto k = json::parse(c.out);
    CHECK(k["overall"] == 0.0);
    CHECK(k["mean_tau"].is_null());
    CHECK(k["tau_excluded"] == 30);
}

TEST_CASE("bench: a missing prediction is a domain error") {
    const auto tmp = fs::temp_directory_path() / "rk_cli_partial.jsonl";
    std::ofstream(tmp) << "{\"sample_id\":\"s0-0\",\"reward\":1}\n";
    const auto r = rk("bench -i " + kData + "groups.jsonl -p " + tmp.string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("MissingScore") != std::string::npos);
    fs::remove(tmp);
}

TEST_CASE("validate counts each error class and exits 1") {
    const auto r = rk("validate --refined -i " + kData + "transcripts.jsonl");
    CHECK(r.exit_code == 1);
    const auto j = json::parse(r.out);
    CHECK(j["total"] == 6);
    CHECK(j["valid"] == 2);
    CHECK(j["errors"]["DanglingBboxRef"] == 1);
    CHECK(j["errors"]["ScoreOutOfRange"] == 1);
    CHECK(j["errors"]["MalformedPayload"] == 1);
    CHECK(j["rule_violations"]["GlobalTokenCount"] == 1);

    // clamp mode accepts the out-of-range score
    const auto c = rk("validate --mode clamp -i " + kData + "transcripts.jsonl");
    CHECK(json::parse(c.out)["errors"].count("ScoreOutOfRange") == 0);
}

TEST_CASE("diagnose on a uniform corpus") {
    const auto r = rk("diagnose -i " + kData + "attn_uniform.jsonl");
    REQUIRE(r.exit_code == 0);
    const auto j = json::parse(r.out);
    CHECK(std::fabs(j["source_entropy"]["mean"].get<double>() - std::log(576.0)) < 1e-9);
    CHECK(std::fabs(j["source_entropy"]["mean"].get<double>() - 6.3561) < 1e-4);
    CHECK(j["gap"]["mean"] == 0.0);
    CHECK(j["stability"].is_null());
    CHECK(j["excluded_pairs"] == 6);
}

TEST_CASE("score, grid-search and grpo-sim") {
    const auto one = rk("score -i " + kData + "request.json");
    REQUIRE(one.exit_code == 0);
    const auto j = json::parse(one.out);
    CHECK(j["request_id"] == "r0");
    CHECK(j["breakdown"]["reward"].is_number());
    CHECK_FALSE(j.contains("timing_ms"));
    CHECK(json::parse(rk("score --with-timings -i " + kData + "request.json").out).contains("timing_ms"));

    const auto batch = json::parse(rk("score -i " + kData + "requests.jsonl").out);
    CHECK(batch["results"].size() == 5);
    CHECK(batch["plan"]["groups"].size() == 2);
    CHECK(batch["results"][4]["breakdown"].is_null());

    const auto bm = json::parse(rk("score --strategy bucket-min -i " + kData + "request.json").out);
    CHECK(bm["breakdown"]["strategy"] == "BucketMin");

    const auto g = rk("grid-search -i " + kData + "preferences.jsonl");
    REQUIRE(g.exit_code == 0);
    CHECK(json::parse(g.out)["cells"] == 64);

    const auto s = rk("grpo-sim --steps 20 --seed 3");
    REQUIRE(s.exit_code == 0);
    CHECK(std::count(s.out.begin(), s.out.end(), '\n') == 20);
}

TEST_CASE("outputs are byte-identical across runs") {
    for (const std::string args : {"bench -i " + kData + "groups.jsonl -p " + kData + "predictions_oracle.jsonl",
                                   "diagnose -i " + kData + "attn_uniform.jsonl",
                                   "score -i " + kData + "requests.jsonl --seed 9",
                                   "validate -i " + kData + "transcripts.jsonl",
                                   "grid-search -i " + kData + "preferences.jsonl",
                                   std::string("grpo-sim --steps 50 --seed 11")}) {
        const auto a = rk(args), b = rk(args);
        CHECK(a.out == b.out);
        CHECK_FALSE(a.out.empty());
    }
    // seeds change mock scores
    CHECK(rk("score -i " + kData + "requests.jsonl --seed 9").out != rk("score -i " + kData + "requests.jsonl --seed 10").out);
}

TEST_CASE("output file flag") {
    const auto tmp = fs::temp_directory_path() / "rk_cli_out.json";
    const auto r = rk("diagnose -i " + kData + "attn_uniform.jsonl -o " + tmp.string());
    CHECK(r.exit_code == 0);
    CHECK(r.out.empty());
    CHECK(json::parse(slurp(tmp))["n"] == 4);
    fs::remove(tmp);
}

TEST_CASE("usage errors exit 2") {
    CHECK(rk("").exit_code == 2);
    CHECK(rk("frobnicate").exit_code == 2);
    CHECK(rk("bench -i " + kData + "groups.jsonl").exit_code == 2);  // no predictions
    CHECK(rk("diagnose -i /no/such/file").exit_code == 2);
    CHECK(rk("score --backend carrier-pigeon -i " + kData + "request.json").exit_code == 2);
    CHECK(rk("validate --mode lenient -i " + kData + "transcripts.jsonl").exit_code == 2);
    CHECK(rk("grpo-sim --strategy median").exit_code != 0);
}
