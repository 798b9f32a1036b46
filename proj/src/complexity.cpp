#include "mgk/complexity.hpp"

#include <limits>
#include <string>

#include "mgk/errors.hpp"
#include "mgk/rng.hpp"

namespace mgk::complexity {

namespace {

void require_positive(Count value, const char* name) {
    if (value <= 0)
        throw config_error(std::string(name) + " must be positive, got " + std::to_string(value));
}

void require_even(Count h, const char* what) {
    if (h % 2 != 0)
        throw config_error(std::string(what) + " assumes an even head count, got " +
                           std::to_string(h));
}

Tensor random_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng) {
    Tensor t(rows, cols);
    for (double& v : t.mutable_data()) v = 0.1 * rng.next_normal();
    return t;
}

Count matmul_cost(const Tensor& a, const Tensor& b) {
    return static_cast<Count>(a.rows()) * static_cast<Count>(b.cols()) *
           (2 * static_cast<Count>(a.cols()) - 1);
}

}  // namespace

Count softmax_flops(Count n, Count h, Count d, Count d_x) {
    require_positive(n, "N");
    require_positive(h, "H");
    require_positive(d, "D");
    require_positive(d_x, "D_x");
    return n * n * h * (4 * d - 1) + n * h * d * (6 * d_x + 2 * h * d - 5);
}

Count mgk_flops(Count n, Count h, Count d, Count d_x, Count m) {
    require_positive(n, "N");
    require_positive(h, "H");
    require_positive(d, "D");
    require_positive(d_x, "D_x");
    require_positive(m, "M");
    if (h % m != 0)
        throw config_error("mixture flop count needs H divisible by M, got H=" +
                           std::to_string(h) + " M=" + std::to_string(m));
    const Count heads = h / m;
    return heads * (n * n * ((2 * m + 2) * d - 1) + n * d * ((m + 2) * (2 * d_x - 1) - 1)) +
           n * h * d * (2 * heads * d - 1);
}

Count mgk_flops_paper(Count n, Count h, Count d, Count d_x) {
    require_positive(n, "N");
    require_positive(h, "H");
    require_positive(d, "D");
    require_positive(d_x, "D_x");
    require_even(h, "the simplified two-component count");
    // N^2 H (3D - 1/2) stays integral because H is even.
    return n * n * (3 * h * d - h / 2) + n * h * d * (4 * d_x + h * d - 4);
}

Count softmax_params(Count h, Count d, Count d_x) {
    require_positive(h, "H");
    require_positive(d, "D");
    require_positive(d_x, "D_x");
    return 3 * h * d * d_x + h * d * h * d;
}

Count mgk_params(Count h, Count d, Count d_x) {
    require_positive(h, "H");
    require_positive(d, "D");
    require_positive(d_x, "D_x");
    require_even(h, "the half-head parameter count");
    return 2 * h * d * d_x + h * d * h * d / 2 + h;
}

ComplexityReport analyze(Count n, Count h, Count d, Count d_x, Count m, bool instrumented) {
    ComplexityReport r;
    r.n = n;
    r.h = h;
    r.d = d;
    r.d_x = d_x;
    r.m = m;
    r.softmax_flops = softmax_flops(n, h, d, d_x);
    r.mgk_flops = mgk_flops(n, h, d, d_x, m);
    r.softmax_params = softmax_params(h, d, d_x);
    if (m == 2) {
        r.mgk_flops_paper = mgk_flops_paper(n, h, d, d_x);
        r.mgk_params = mgk_params(h, d, d_x);
        r.params_ratio =
            static_cast<double>(r.mgk_params) / static_cast<double>(r.softmax_params);
    }
    r.flops_ratio = static_cast<double>(r.mgk_flops) / static_cast<double>(r.softmax_flops);
    if (instrumented) {
        AttentionConfig cfg;
        cfg.variant = m == 1 ? Variant::Gaussian : Variant::MGK;
        cfg.heads = static_cast<std::size_t>(h);
        cfg.components = static_cast<std::size_t>(m);
        cfg.d = static_cast<std::size_t>(d);
        cfg.d_x = static_cast<std::size_t>(d_x);
        if (m == 1) cfg.sigma2 = {1.0};
        r.instrumented_flops = instrumented_count(cfg, static_cast<std::size_t>(n));
    }
    return r;
}

Count instrumented_count(const AttentionConfig& cfg, std::size_t n) {
    validate(cfg);
    const bool mixture = cfg.variant == Variant::MGK;
    if (cfg.variant != Variant::Softmax && cfg.variant != Variant::Gaussian && !mixture)
        throw config_error("instrumented counting needs a score-materializing variant");
    if (cfg.value_dim() != cfg.d)
        throw config_error("instrumented counting assumes the value dimension equals D");
    const Count h = static_cast<Count>(cfg.heads);
    const Count d = static_cast<Count>(cfg.d);
    const Count m = mixture ? static_cast<Count>(cfg.components) : 1;
    if (h % m != 0)
        throw config_error("instrumented counting needs H divisible by M, got H=" +
                           std::to_string(h) + " M=" + std::to_string(m));
    const Count heads_run = h / m;
    const auto sigma2 = cfg.resolved_sigma2();

    SplitMix64 rng(0x5eedull);
    const Tensor x = random_matrix(n, cfg.d_x, rng);
    Count flops = 0;
    std::vector<Tensor> per_head;
    per_head.reserve(static_cast<std::size_t>(heads_run));
    for (Count head = 0; head < heads_run; ++head) {
        const Tensor w_q = random_matrix(cfg.d, cfg.d_x, rng);
        const Tensor w_v = random_matrix(cfg.d, cfg.d_x, rng);
        const Tensor q = matmul(x, transpose(w_q));
        const Tensor v = matmul(x, transpose(w_v));
        flops += matmul_cost(x, transpose(w_q)) + matmul_cost(x, transpose(w_v));
        std::vector<Tensor> keys;
        for (Count r = 0; r < m; ++r) {
            const Tensor w_k = random_matrix(cfg.d, cfg.d_x, rng);
            keys.push_back(matmul(x, transpose(w_k)));
            flops += matmul_cost(x, transpose(w_k));
        }
        AttentionOutput out;
        switch (cfg.variant) {
            case Variant::Softmax:
                out = softmax_attention(q, keys[0], v, cfg.causal);
                break;
            case Variant::Gaussian:
                out = gaussian_attention(q, keys[0], v, sigma2[0], cfg.causal);
                break;
            default: {
                Tensor pi(1, static_cast<std::size_t>(m), 1.0);
                out = mgk_attention(q, keys, v, pi, sigma2, cfg.estep, cfg.kernel, cfg.causal);
                break;
            }
        }
        const Count nn = static_cast<Count>(n) * static_cast<Count>(n);
        flops += m * nn * (2 * d - 1);  // score kernels at dot parity
        flops += (m - 1) * nn;          // component mixing
        flops += matmul_cost(*out.scores, v);
        per_head.push_back(out.output);
    }
    const Tensor cat = concat_cols(per_head);
    const Tensor w_o = random_matrix(static_cast<std::size_t>(h * d),
                                     static_cast<std::size_t>(heads_run * d), rng);
    (void)matmul(cat, transpose(w_o));
    flops += matmul_cost(cat, transpose(w_o));
    return flops;
}

std::vector<ComplexityReport> ratio_sweep(const std::vector<Count>& ns,
                                          const std::vector<Count>& ds, Count h, Count d_x,
                                          Count m, bool instrumented) {
    if (ns.empty() || ds.empty()) throw config_error("ratio sweep needs a non-empty grid");
    std::vector<ComplexityReport> rows;
    rows.reserve(ns.size() * ds.size());
    for (Count n : ns)
        for (Count d : ds) rows.push_back(analyze(n, h, d, d_x, m, instrumented));
    return rows;
}

void write_csv(std::ostream& os, const std::vector<ComplexityReport>& rows) {
    os << "N,H,D,D_x,M,softmax_flops,mgk_flops,mgk_flops_paper,softmax_params,"
          "mgk_params,flops_ratio,params_ratio,instrumented_flops\n";
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        os << r.n << ',' << r.h << ',' << r.d << ',' << r.d_x << ',' << r.m << ','
           << r.softmax_flops << ',' << r.mgk_flops << ',' << r.mgk_flops_paper << ','
           << r.softmax_params << ',' << r.mgk_params << ',' << r.flops_ratio << ','
           << r.params_ratio << ',';
        if (r.instrumented_flops) os << *r.instrumented_flops;
        os << '\n';
    }
    os.precision(old_precision);
}

}  // namespace mgk::complexity
