#include "rewardkit/attn_diag.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "rewardkit/error.hpp"
#include "rewardkit/json_text.hpp"

namespace rewardkit::attn {

using nlohmann::json;

namespace {

const double kMaxEntropy = std::log(static_cast<double>(kGridCells));

// weights[t * n + s]: share of source cell s that lands in target cell t when
// n source cells are resampled onto kGridSide target cells. Both axes are
// scaled to n * kGridSide units so overlaps are exact integers.
std::vector<double> axis_weights(std::size_t n) {
    std::vector<double> w(kGridSide * n, 0.0);
    for (std::size_t t = 0; t < kGridSide; ++t) {
        const std::size_t t_lo = t * n, t_hi = (t + 1) * n;
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t s_lo = s * kGridSide, s_hi = (s + 1) * kGridSide;
            const std::size_t lo = std::max(t_lo, s_lo), hi = std::min(t_hi, s_hi);
            if (hi > lo) w[t * n + s] = static_cast<double>(hi - lo) / static_cast<double>(kGridSide);
        }
    }
    return w;
}

AttentionGrid pool_one(const AttentionMapRaw& m) {
    if (m.height == 0 || m.width == 0 || m.weights.size() != m.height * m.width)
        throw Error(ErrorCode::InvalidInput, "attention map shape does not match its weight count");
    double total = 0.0;
    for (double v : m.weights) {
        if (!std::isfinite(v) || v < 0.0)
            throw Error(ErrorCode::InvalidInput, "attention weights must be finite and non-negative");
        total += v;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::AllZeroMap, "attention map has no positive weight");

    const auto wr = axis_weights(m.height);
    const auto wc = axis_weights(m.width);
    // Rows first: tmp is kGridSide x width.
    std::vector<double> tmp(kGridSide * m.width, 0.0);
    for (std::size_t t = 0; t < kGridSide; ++t)
        for (std::size_t r = 0; r < m.height; ++r) {
            const double w = wr[t * m.height + r];
            if (w == 0.0) continue;
            const double* src = &m.weights[r * m.width];
            double* dst = &tmp[t * m.width];
            for (std::size_t c = 0; c < m.width; ++c) dst[c] += w * src[c];
        }
    AttentionGrid grid{};
    for (std::size_t t = 0; t < kGridSide; ++t)
        for (std::size_t u = 0; u < kGridSide; ++u) {
            double acc = 0.0;
            for (std::size_t c = 0; c < m.width; ++c) acc += wc[u * m.width + c] * tmp[t * m.width + c];
            grid[t * kGridSide + u] = acc / total;
        }
    return grid;
}

void renormalize(AttentionGrid& g) {
    double total = 0.0;
    for (double v : g) total += v;
    for (double& v : g) v /= total;
}

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return out;
}

// Centered, unit-norm copy of a grid; empty when the grid is constant.
std::optional<AttentionGrid> standardize(const AttentionGrid& g) {
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(kGridCells);
    AttentionGrid z{};
    double ss = 0.0;
    for (std::size_t i = 0; i < kGridCells; ++i) {
        z[i] = g[i] - mean;
        ss += z[i] * z[i];
    }
    if (std::sqrt(ss / static_cast<double>(kGridCells)) < kConstantGridStd) return std::nullopt;
    const double norm = std::sqrt(ss);
    for (double& v : z) v /= norm;
    return z;
}

CorrelationSummary summarize(const std::vector<double>& rhos, std::size_t excluded) {
    if (rhos.empty()) throw Error(ErrorCode::AllPairsExcluded, "every grid pair involves a constant grid");
    const MeanStd ms = mean_std(rhos);
    return CorrelationSummary{ms.mean, ms.std, rhos.size(), excluded};
}

AttentionMapRaw map_from_json(const json& shape, const json& weights) {
    AttentionMapRaw m;
    m.height = shape.at(0).get<std::size_t>();
    m.width = shape.at(1).get<std::size_t>();
    m.weights = weights.get<std::vector<double>>();
    return m;
}

AttentionGrid grid_from_json(const json& side) {
    if (side.is_array()) {
        const AttentionMapRaw m{kGridSide, kGridSide, side.get<std::vector<double>>()};
        return pool_to_grid(std::span(&m, 1));
    }
    const auto& shape = side.at("shape");
    std::vector<AttentionMapRaw> maps;
    for (const auto& w : side.at("maps")) maps.push_back(map_from_json(shape, w));
    return pool_to_grid(maps);
}

json mean_std_json(const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; }

}  // namespace

AttentionGrid pool_to_grid(std::span<const AttentionMapRaw> maps) {
    if (maps.empty()) throw Error(ErrorCode::EmptyInput, "no attention maps to pool");
    AttentionGrid sum{};
    for (const auto& m : maps) {
        const auto g = pool_one(m);
        for (std::size_t i = 0; i < kGridCells; ++i) sum[i] += g[i];
    }
    renormalize(sum);
    return sum;
}

void check_grid(const AttentionGrid& grid) {
    double total = 0.0;
    for (double v : grid) {
        if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::InvalidInput, "grid cells must be finite and non-negative");
        total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidInput, "grid must sum to 1");
}

double shannon_entropy(const AttentionGrid& grid) {
    double h = 0.0;
    for (double p : grid)
        if (p > 0.0) h -= p * std::log(p);
    return std::clamp(h, 0.0, kMaxEntropy);
}

double entropy_gap(const SamplePair& pair) {
    return std::fabs(shannon_entropy(pair.source) - shannon_entropy(pair.edited));
}

double concentration_index(const AttentionGrid& grid) {
    AttentionGrid sorted = grid;
    std::partial_sort(sorted.begin(), sorted.begin() + kTopCells, sorted.end(), std::greater<>());
    double mass = 0.0;
    for (std::size_t i = 0; i < kTopCells; ++i) mass += sorted[i];
    return std::min(mass, 1.0);
}

double pearson(const AttentionGrid& a, const AttentionGrid& b) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < kGridCells; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(kGridCells);
    mb /= static_cast<double>(kGridCells);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < kGridCells; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    const double n = static_cast<double>(kGridCells);
    if (std::sqrt(saa / n) < kConstantGridStd || std::sqrt(sbb / n) < kConstantGridStd)
        throw Error(ErrorCode::ZeroVariance, "correlation undefined for a constant grid");
    return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

CorrelationSummary inter_sample_correlation(std::span<const AttentionGrid> grids) {
    const std::size_t n = grids.size();
    if (n < 2) throw Error(ErrorCode::TooFewSamples, "correlation needs at least two grids");

    std::vector<std::optional<AttentionGrid>> z(n);
    const auto ln = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < ln; ++i) z[static_cast<std::size_t>(i)] = standardize(grids[static_cast<std::size_t>(i)]);

    // Row i owns pairs (i, j > i), stored at a fixed offset so the reduction
    // below visits them in the same order as the serial loop.
    std::vector<std::size_t> offset(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + (n - 1 - i);
    std::vector<double> rho(offset[n]);
    std::vector<unsigned char> valid(offset[n], 0);

#pragma omp parallel for schedule(dynamic, 8)
    for (long long li = 0; li < ln; ++li) {
        const auto i = static_cast<std::size_t>(li);
        if (!z[i]) continue;
        const double* zi = z[i]->data();
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!z[j]) continue;
            const double* zj = z[j]->data();
            double dot = 0.0;
            for (std::size_t k = 0; k < kGridCells; ++k) dot += zi[k] * zj[k];
            const std::size_t slot = offset[i] + (j - i - 1);
            rho[slot] = std::clamp(dot, -1.0, 1.0);
            valid[slot] = 1;
        }
    }

    std::vector<double> kept;
    kept.reserve(rho.size());
    for (std::size_t s = 0; s < rho.size(); ++s)
        if (valid[s]) kept.push_back(rho[s]);
    return summarize(kept, rho.size() - kept.size());
}

namespace serial {

CorrelationSummary inter_sample_correlation(std::span<const AttentionGrid> grids) {
    if (grids.size() < 2) throw Error(ErrorCode::TooFewSamples, "correlation needs at least two grids");
    std::vector<double> rhos;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < grids.size(); ++i)
        for (std::size_t j = i + 1; j < grids.size(); ++j) {
            try {
                rhos.push_back(pearson(grids[i], grids[j]));
            } catch (const Error& e) {
                if (e.code() != ErrorCode::ZeroVariance) throw;
                ++excluded;
            }
        }
    return summarize(rhos, excluded);
}

}  // namespace serial

DiagnosticsReport diagnose_corpus(std::span<const SamplePair> pairs) {
    if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "empty attention corpus");
    DiagnosticsReport r;
    r.n = pairs.size();
    std::vector<double> gaps, entropies, concs;
    std::vector<AttentionGrid> sources;
    for (const auto& p : pairs) {
        check_grid(p.source);
        check_grid(p.edited);
        gaps.push_back(entropy_gap(p));
        entropies.push_back(shannon_entropy(p.source));
        concs.push_back(concentration_index(p.source));
        sources.push_back(p.source);
    }
    r.gap = mean_std(gaps);
    r.source_entropy = mean_std(entropies);
    r.concentration = mean_std(concs);
    if (sources.size() >= 2) {
        try {
            const auto c = inter_sample_correlation(sources);
            r.stability = MeanStd{c.mean, c.std};
            r.stability_pairs = c.pairs;
            r.excluded_pairs = c.excluded;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AllPairsExcluded) throw;
            r.excluded_pairs = sources.size() * (sources.size() - 1) / 2;
        }
    }
    return r;
}

SamplePair sample_from_json(const json& j) {
    try {
        SamplePair p;
        if (j.contains("sample_id")) p.sample_id = j["sample_id"].is_string() ? j["sample_id"].get<std::string>()
                                                                               : j["sample_id"].dump();
        if (j.contains("source_grid")) {
            p.source = grid_from_json(j.at("source_grid"));
            p.edited = grid_from_json(j.at("edited_grid"));
        } else {
            p.source = grid_from_json(j.at("source"));
            p.edited = grid_from_json(j.at("edited"));
        }
        return p;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("bad attention record: ") + e.what());
    }
}

std::vector<SamplePair> read_corpus_jsonl(std::string_view text) {
    std::vector<SamplePair> pairs;
    for (const auto& [lineno, line] : jsonl_lines(text)) {
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw Error(ErrorCode::InvalidInput, "corpus line " + std::to_string(lineno) + ": invalid JSON");
        pairs.push_back(sample_from_json(j));
    }
    return pairs;
}

json to_json(const DiagnosticsReport& r) {
    json j;
    j["n"] = r.n;
    j["gap"] = mean_std_json(r.gap);
    j["source_entropy"] = mean_std_json(r.source_entropy);
    j["concentration"] = mean_std_json(r.concentration);
    j["stability"] = r.stability ? mean_std_json(*r.stability) : json(nullptr);
    j["stability_pairs"] = r.stability_pairs;
    j["excluded_pairs"] = r.excluded_pairs;
    return j;
}

std::string format_table(const DiagnosticsReport& r) {
    char buf[256];
    std::ostringstream os;
    os << "N=" << r.n << "\n";
    os << "  Gap |dH|        Entropy H_src    Conc.            Corr.\n";
    std::snprintf(buf, sizeof buf, "  %.2f +/- %.2f    %.2f +/- %.2f    %.2f +/- %.2f    ", r.gap.mean, r.gap.std,
                  r.source_entropy.mean, r.source_entropy.std, r.concentration.mean, r.concentration.std);
    os << buf;
    if (r.stability) {
        std::snprintf(buf, sizeof buf, "%.2f +/- %.2f\n", r.stability->mean, r.stability->std);
        os << buf;
    } else {
        os << "n/a\n";
    }
    if (r.excluded_pairs) os << "excluded pairs (constant grids): " << r.excluded_pairs << "\n";
    return os.str();
}

}  // namespace rewardkit::attn
