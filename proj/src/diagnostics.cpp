#include "mgk/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"
#include "mgk/errors.hpp"
#include "mgk/rng.hpp"

namespace mgk::diag {

namespace {

constexpr double kOrthTol = 1e-12;
constexpr int kMaxSweeps = 100;

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix_csv(const Tensor& scores, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        if (i > 0) os << '\n';
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            if (j > 0) os << ',';
            os << format_value(scores.at(i, j));
        }
    }
    os.flush();
    if (!os) throw io_error("write failed for " + path);
}

}  // namespace

std::size_t matrix_rank(const Tensor& a, double threshold) {
    if (a.rows() != a.cols())
        throw shape_error("matrix_rank: need a square matrix, got " + a.shape_str());
    if (threshold <= 0.0) throw config_error("matrix_rank: threshold must be positive");
    const std::size_t n = a.rows();
    if (n == 0) return 0;

    // Column-major working copy; rotations act on columns.
    std::vector<double> w(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = a.at(i, j);
            if (!std::isfinite(v)) throw numeric_error("matrix_rank: non-finite entry");
            w[j * n + i] = v;
        }

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* cp = &w[p * n];
                double* cq = &w[q * n];
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    alpha += cp[i] * cp[i];
                    beta += cq[i] * cq[i];
                    gamma += cp[i] * cq[i];
                }
                if (std::fabs(gamma) <= kOrthTol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = cp[i], vq = cq[i];
                    cp[i] = c * vp - s * vq;
                    cq[i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm2 += w[j * n + i] * w[j * n + i];
        if (std::sqrt(norm2) > threshold) ++rank;
    }
    return rank;
}

std::vector<RankHistogram> rank_distribution(const ScoreSource& scores_for,
                                             const std::vector<Tensor>& sample, std::size_t count,
                                             double threshold, std::uint64_t seed) {
    if (!scores_for) throw contract_error("rank_distribution: no score source");
    if (sample.empty()) throw config_error("rank_distribution: empty sample");
    if (count < 1) throw config_error("rank_distribution: count must be at least 1");

    SplitMix64 rng(seed);
    std::vector<RankHistogram> out;
    std::size_t layers = 0, heads = 0;
    for (std::size_t draw = 0; draw < count; ++draw) {
        const std::size_t idx = static_cast<std::size_t>(rng.next_below(sample.size()));
        const auto grid = scores_for(sample[idx]);
        if (draw == 0) {
            layers = grid.size();
            heads = layers == 0 ? 0 : grid.front().size();
            if (layers == 0 || heads == 0)
                throw contract_error("rank_distribution: source returned no matrices");
            out.resize(layers * heads);
            for (std::size_t l = 0; l < layers; ++l)
                for (std::size_t h = 0; h < heads; ++h) {
                    auto& hist = out[l * heads + h];
                    hist.layer = l;
                    hist.head = h;
                    hist.threshold = threshold;
                    hist.seed = seed;
                    hist.ranks.reserve(count);
                }
        }
        if (grid.size() != layers)
            throw contract_error("rank_distribution: layer count changed between draws");
        for (std::size_t l = 0; l < layers; ++l) {
            if (grid[l].size() != heads)
                throw contract_error("rank_distribution: head count changed between draws");
            for (std::size_t h = 0; h < heads; ++h)
                out[l * heads + h].ranks.push_back(matrix_rank(grid[l][h], threshold));
        }
    }
    return out;
}

Tensor head_similarity(const std::vector<Tensor>& heads) {
    if (heads.size() < 2)
        throw contract_error("head_similarity: need at least 2 heads, got " +
                             std::to_string(heads.size()));
    const std::size_t rows = heads.front().rows(), cols = heads.front().cols();
    for (const auto& h : heads) {
        if (h.rows() != rows || h.cols() != cols)
            throw shape_error("head_similarity: mismatched head shapes, " +
                              heads.front().shape_str() + " vs " + h.shape_str());
    }
    const std::size_t n = heads.size();
    const double count = static_cast<double>(rows * cols);
    Tensor out(n, n);
    auto& o = out.mutable_data();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            double total = 0.0;
            const auto& xa = heads[a].data();
            const auto& xb = heads[b].data();
            for (std::size_t e = 0; e < xa.size(); ++e) total += std::fabs(xa[e] - xb[e]);
            const double mean = count == 0.0 ? 0.0 : total / count;
            o[a * n + b] = mean;
            o[b * n + a] = mean;
        }
    }
    return out;
}

void write_rank_report(std::ostream& os, const std::vector<RankHistogram>& histograms) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& h : histograms) {
        arr.push_back({{"layer", h.layer},
                       {"head", h.head},
                       {"ranks", h.ranks},
                       {"threshold", h.threshold},
                       {"seed", h.seed}});
    }
    os << arr.dump(2) << '\n';
}

void dump_attention(const AttentionOutput& head, const std::string& path) {
    if (!head.scores) throw contract_error("dump_attention: scores were not materialized");
    write_matrix_csv(*head.scores, path);
}

std::vector<std::string> dump_attention(const MultiHeadResult& result,
                                        const std::string& path_prefix) {
    std::vector<std::string> paths;
    paths.reserve(result.heads.size());
    for (std::size_t h = 0; h < result.heads.size(); ++h) {
        std::string path = path_prefix + "_head" + std::to_string(h) + ".csv";
        dump_attention(result.heads[h], path);
        paths.push_back(std::move(path));
    }
    return paths;
}

}  // namespace mgk::diag
