// Regenerates testdata/. Usage: rewardkit_testdata <out-dir>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "rewardkit/bench_eval.hpp"
#include "rewardkit/judge_io.hpp"
#include "rewardkit/service.hpp"
#include "support.hpp"

using namespace rewardkit;
using nlohmann::json;

namespace {

void write(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string jsonl(const std::vector<json>& rows) {
    std::string s;
    for (const auto& r : rows) s += r.dump() + "\n";
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: rewardkit_testdata <out-dir>\n";
        return 2;
    }
    const std::string dir = argv[1];

    // Benchmark: 30 groups over 12 instruction sets.
    const auto pool = fixtures::bench_pool(12);
    const auto groups = bench::compose_groups(pool, {10, 10, 10}, 7);
    write(dir + "/groups.jsonl", bench::to_jsonl(groups));
    std::vector<json> oracle, constant;
    for (const auto& [id, v] : fixtures::oracle_scores(pool)) oracle.push_back({{"sample_id", id}, {"reward", v}});
    for (const auto& [id, v] : fixtures::constant_scores(groups)) constant.push_back({{"sample_id", id}, {"reward", v}});
    auto by_id = [](const json& a, const json& b) { return a["sample_id"] < b["sample_id"]; };
    std::sort(oracle.begin(), oracle.end(), by_id);
    std::sort(constant.begin(), constant.end(), by_id);
    write(dir + "/predictions_oracle.jsonl", jsonl(oracle));
    write(dir + "/predictions_constant.jsonl", jsonl(constant));

    // Attention: raw maps of mixed shapes that all pool to the uniform grid.
    std::vector<json> uniform;
    const int shapes[][2] = {{24, 24}, {48, 48}, {7, 5}, {1, 1}};
    for (int i = 0; i < 4; ++i) {
        const int h = shapes[i][0], w = shapes[i][1];
        const json map{{"shape", {h, w}}, {"maps", {std::vector<double>(h * w, 1.0)}}};
        uniform.push_back({{"sample_id", "u" + std::to_string(i)}, {"source", map}, {"edited", map}});
    }
    write(dir + "/attn_uniform.jsonl", jsonl(uniform));

    // Transcripts: two good, then one per error class the CLI reports.
    const auto sc_prompt = service::assemble_prompt(service::PromptTemplate::ScSingle, "replace the car with a bike", 1);
    const auto pq_prompt = service::assemble_prompt(service::PromptTemplate::Pq, {}, 0);
    const std::vector<json> transcripts = {
        {{"id", "good-sc"}, {"stream", "sc"}, {"raw", service::mock_judge(sc_prompt, {"s.png", "e.png"}, 3)}},
        {{"id", "good-pq"}, {"stream", "pq"}, {"raw", service::mock_judge(pq_prompt, {"e.png"}, 3)}},
        {{"id", "dangling"},
         {"stream", "sc"},
         {"raw",
          R"({"edit_region": [{"id": 0, "label": "bike", "bbox_2d": [10, 10, 200, 300]}], "reasoning": "The <|bbox_0|>bike fits but <|bbox_4|>wheel floats. <|global|> Fine.", "score": [20, 18]})"}},
        {{"id", "out-of-range"}, {"stream", "pq"}, {"raw", R"({"reasoning": "Sharp.", "score": [26, 3]})"}},
        {{"id", "prose"}, {"stream", "sc"}, {"raw", "The edit is good."}},
        {{"id", "two-globals"},
         {"stream", "sc"},
         {"raw", R"({"edit_region": [], "reasoning": "<|global|> ok <|global|> again", "score": [5, 5]})"}},
    };
    write(dir + "/transcripts.jsonl", jsonl(transcripts));

    // Reward requests sharing one instruction, plus one PQ-only request.
    std::vector<json> requests;
    for (int i = 0; i < 4; ++i)
        requests.push_back({{"request_id", "r" + std::to_string(i)},
                            {"instruction", "make the sky purple"},
                            {"source_refs", {"src/sky.png"}},
                            {"edited_ref", "out/sky-" + std::to_string(i) + ".png"}});
    requests.push_back({{"request_id", "pq"}, {"mode", "pq"}, {"edited_ref", "out/sky-0.png"}});
    write(dir + "/requests.jsonl", jsonl(requests));
    write(dir + "/request.json", requests[0].dump(2) + "\n");

    // Preference pairs where the better side dominates on every coordinate.
    Rng rng(5);
    std::vector<json> prefs;
    for (int i = 0; i < 40; ++i) {
        json worse, better;
        for (const char* k : {"s_if", "s_con", "s_nat", "s_art"}) {
            const double w = std::round(20.0 * rng.uniform01());
            worse[k] = w;
            better[k] = w + 1.0 + std::round(4.0 * rng.uniform01());
        }
        prefs.push_back({{"better", better}, {"worse", worse}});
    }
    write(dir + "/preferences.jsonl", jsonl(prefs));
    return 0;
}
