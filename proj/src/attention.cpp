#include "mgk/attention.hpp"

#include <cmath>
#include <string>

#include "mgk/em.hpp"

namespace mgk {

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
    if (q.cols() != k.cols()) {
        throw shape_error("query/key dims differ, " + q.shape_str() + " vs " + k.shape_str());
    }
    if (k.rows() != v.rows()) {
        throw shape_error("key/value counts differ, " + k.shape_str() + " vs " + v.shape_str());
    }
    if (causal && q.rows() != k.rows()) {
        throw config_error("causal attention needs one key per query, got " + q.shape_str() +
                           " queries and " + k.shape_str() + " keys");
    }
}

// Normalizes the stored positive mixing weights; rejects negatives and an
// all-zero vector.
Tensor normalized_pi(const Tensor& pi, std::size_t m) {
    if (pi.rows() != 1 || pi.cols() != m) {
        throw config_error("pi must be 1x" + std::to_string(m) + ", got " + pi.shape_str());
    }
    double total = 0.0;
    for (double p : pi.data()) {
        if (p < 0.0) throw config_error("pi entries must be non-negative");
        total += p;
    }
    if (!(total > 0.0)) throw config_error("pi has no mass");
    return div(pi, sum(pi));
}

void check_sigma2(const std::vector<double>& sigma2, std::size_t m) {
    if (sigma2.size() != m) {
        throw config_error("sigma2 has " + std::to_string(sigma2.size()) + " entries for " +
                           std::to_string(m) + " components");
    }
    for (double s : sigma2) {
        if (!(s > 0.0)) throw config_error("sigma2 must be strictly positive");
    }
}

AttentionOutput score_attention(const Tensor& scores_logits, const Tensor& v, bool causal) {
    Tensor a;
    if (causal) {
        const Tensor mask = causal_mask(scores_logits.rows());
        a = softmax_rows(scores_logits, &mask);
    } else {
        a = softmax_rows(scores_logits);
    }
    return AttentionOutput{matmul(a, v), a, std::nullopt};
}

// Shared body of linear and MLK attention once the feature-mapped keys are
// fixed. phi_k must be strictly positive.
Tensor linear_core(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v, bool causal) {
    const std::size_t d = phi_q.cols();
    Tensor num, den;
    if (causal) {
        for (std::size_t c = 0; c < d; ++c) {
            const Tensor qc = slice_cols(phi_q, c, c + 1);            // Nx1
            const Tensor kc = slice_cols(phi_k, c, c + 1);            // Nx1
            const Tensor term = mul(qc, cumsum_rows(mul(kc, v)));     // NxD_v
            num = (c == 0) ? term : add(num, term);
        }
        den = row_sums(mul(phi_q, cumsum_rows(phi_k)));
    } else {
        num = matmul(phi_q, matmul(transpose(phi_k), v));
        den = matmul(phi_q, transpose(col_sums(phi_k)));
    }
    for (std::size_t i = 0; i < den.rows(); ++i) {
        if (!(den.at(i, 0) > 0.0)) {
            throw numeric_error("degenerate normalizer at position " + std::to_string(i));
        }
    }
    return div(num, den);
}

}  // namespace

std::vector<double> default_sigma2(std::size_t components, std::size_t d) {
    const double base = std::sqrt(static_cast<double>(d));
    std::vector<double> out(components);
    for (std::size_t r = 0; r < components; ++r) out[r] = static_cast<double>(2 * r + 1) * base;
    return out;
}

std::vector<double> AttentionConfig::resolved_sigma2() const {
    return sigma2.empty() ? default_sigma2(components, d) : sigma2;
}

void validate(const AttentionConfig& cfg) {
    if (cfg.heads == 0) throw config_error("config: need at least one head");
    if (cfg.components == 0) throw config_error("config: need at least one component");
    if (cfg.d == 0 || cfg.d_x == 0) throw config_error("config: zero dimension");
    const bool mixture = cfg.variant == Variant::MGK || cfg.variant == Variant::MLK;
    if (!mixture && cfg.components != 1) {
        throw config_error("config: non-mixture variant with " + std::to_string(cfg.components) +
                           " components");
    }
    if (!cfg.sigma2.empty()) check_sigma2(cfg.sigma2, cfg.components);
}

std::vector<Tensor> make_keys(const Tensor& x, const MixtureKeyParams& params) {
    const std::size_t m = params.components();
    if (m == 0) throw config_error("make_keys: no components");
    std::vector<Tensor> keys;
    keys.reserve(m);
    if (params.mode == KeyMode::IndependentProjections) {
        if (!params.b_r.empty()) {
            throw config_error("make_keys: offsets present with independent projections");
        }
        for (const Tensor& w : params.w_kr) {
            if (w.rows() != params.w_kr.front().rows() || w.cols() != x.cols()) {
                throw config_error("make_keys: projection " + w.shape_str() +
                                   " inconsistent with input " + x.shape_str());
            }
            keys.push_back(matmul(x, transpose(w)));
        }
    } else {
        if (params.w_kr.size() != 1) {
            throw config_error("make_keys: shared-shifted mode needs exactly one projection, got " +
                               std::to_string(params.w_kr.size()));
        }
        const Tensor base = matmul(x, transpose(params.w_kr.front()));
        for (const Tensor& b : params.b_r) {
            if (b.rows() != 1 || b.cols() != base.cols()) {
                throw config_error("make_keys: offset " + b.shape_str() + " does not match keys " +
                                   base.shape_str());
            }
            keys.push_back(add(base, b));
        }
    }
    return keys;
}

AttentionOutput softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
    check_qkv(q, k, v, causal);
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    return score_attention(mul(matmul(q, transpose(k)), scale), v, causal);
}

AttentionOutput gaussian_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   double sigma2, bool causal) {
    check_qkv(q, k, v, causal);
    if (!(sigma2 > 0.0)) throw config_error("sigma2 must be strictly positive");
    return score_attention(mul(pairwise_sqdist(q, k), -0.5 / sigma2), v, causal);
}

AttentionOutput mgk_attention(const Tensor& q, const std::vector<Tensor>& keys, const Tensor& v,
                              const Tensor& pi, const std::vector<double>& sigma2, EStep estep,
                              Kernel kernel, bool causal) {
    const std::size_t m = keys.size();
    if (m == 0) throw config_error("mgk_attention: no components");
    check_sigma2(sigma2, m);
    for (const Tensor& k : keys) check_qkv(q, k, v, causal);

    std::vector<Tensor> logits;
    logits.reserve(m);
    for (std::size_t r = 0; r < m; ++r) {
        if (kernel == Kernel::GaussianDistance) {
            logits.push_back(mul(pairwise_sqdist(q, keys[r]), -0.5 / sigma2[r]));
        } else {
            logits.push_back(mul(matmul(q, transpose(keys[r])), 1.0 / sigma2[r]));
        }
    }

    Tensor peak = logits[0];
    for (std::size_t r = 1; r < m; ++r) peak = max_elem(peak, logits[r]);

    AttentionOutput out;
    if (estep == EStep::HardAssign) {
        // max_r exp(L_r) = exp(max_r L_r); the left-biased max fold makes
        // ties resolve to the smallest component, and routes the gradient
        // only through the winner.
        out = score_attention(peak, v, causal);
        return out;
    }

    const Tensor pn = normalized_pi(pi, m);
    const Tensor peak_const = peak.detached();  // shift only; cancels in the row normalizer
    Tensor mixture;
    for (std::size_t r = 0; r < m; ++r) {
        const Tensor term = mul(exp(sub(logits[r], peak_const)), slice_cols(pn, r, r + 1));
        mixture = (r == 0) ? term : add(mixture, term);
    }
    out = score_attention(add(log(mixture), peak_const), v, causal);

    if (q.rows() == keys[0].rows()) {
        if (kernel == Kernel::GaussianDistance) {
            std::vector<Tensor> kv;
            for (const Tensor& k : keys) kv.push_back(k.detached());
            std::vector<double> pv = pn.data();
            out.responsibilities =
                em::soft_responsibilities(q.detached(), kv, pv, sigma2).gamma;
        } else {
            // dot-kernel analog of the soft assignment, same stabilization
            Tensor gamma(q.rows(), m);
            auto& gv = gamma.mutable_data();
            for (std::size_t i = 0; i < q.rows(); ++i) {
                double mx = -1e300;
                std::vector<double> l(m);
                for (std::size_t r = 0; r < m; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < q.cols(); ++c) dot += q.at(i, c) * keys[r].at(i, c);
                    l[r] = std::log(pn.at(0, r)) + dot / sigma2[r];
                    mx = std::max(mx, l[r]);
                }
                double z = 0.0;
                for (std::size_t r = 0; r < m; ++r) {
                    gv[i * m + r] = std::exp(l[r] - mx);
                    z += gv[i * m + r];
                }
                for (std::size_t r = 0; r < m; ++r) gv[i * m + r] /= z;
            }
            out.responsibilities = gamma;
        }
    }
    return out;
}

AttentionOutput linear_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
    check_qkv(q, k, v, causal);
    const Tensor h =
        linear_core(positive_feature_map(q), positive_feature_map(k), v, causal);
    return AttentionOutput{h, std::nullopt, std::nullopt};
}

AttentionOutput mlk_attention(const Tensor& q, const std::vector<Tensor>& keys, const Tensor& v,
                              const Tensor& pi, bool causal) {
    const std::size_t m = keys.size();
    if (m == 0) throw config_error("mlk_attention: no components");
    for (const Tensor& k : keys) check_qkv(q, k, v, causal);
    const Tensor pn = normalized_pi(pi, m);
    Tensor phi_k_mix;
    for (std::size_t r = 0; r < m; ++r) {
        const Tensor term = mul(positive_feature_map(keys[r]), slice_cols(pn, r, r + 1));
        phi_k_mix = (r == 0) ? term : add(phi_k_mix, term);
    }
    const Tensor h = linear_core(positive_feature_map(q), phi_k_mix, v, causal);
    return AttentionOutput{h, std::nullopt, std::nullopt};
}

MultiHeadResult multi_head(const Tensor& x, const ProjectionParams& params,
                           const AttentionConfig& cfg) {
    validate(cfg);
    if (params.heads.size() != cfg.heads) {
        throw config_error("head-count mismatch: config says " + std::to_string(cfg.heads) +
                           ", params carry " + std::to_string(params.heads.size()));
    }
    const std::size_t dv = cfg.value_dim();

    MultiHeadResult result;
    std::vector<Tensor> outputs;
    for (const HeadParams& head : params.heads) {
        if (head.w_q.rows() != cfg.d || head.w_q.cols() != cfg.d_x) {
            throw config_error("w_q is " + head.w_q.shape_str() + ", config wants " +
                               std::to_string(cfg.d) + "x" + std::to_string(cfg.d_x));
        }
        if (head.w_v.rows() != dv || head.w_v.cols() != cfg.d_x) {
            throw config_error("w_v is " + head.w_v.shape_str() + ", config wants " +
                               std::to_string(dv) + "x" + std::to_string(cfg.d_x));
        }
        if (head.keys.components() != cfg.components) {
            throw config_error("key params carry " + std::to_string(head.keys.components()) +
                               " components, config wants " + std::to_string(cfg.components));
        }
        const Tensor q = matmul(x, transpose(head.w_q));
        const Tensor v = matmul(x, transpose(head.w_v));
        const std::vector<Tensor> keys = make_keys(x, head.keys);
        const std::vector<double> sigma2 =
            head.keys.sigma2.empty() ? cfg.resolved_sigma2() : head.keys.sigma2;

        AttentionOutput head_out;
        switch (cfg.variant) {
            case Variant::Softmax:
                head_out = softmax_attention(q, keys[0], v, cfg.causal);
                break;
            case Variant::Gaussian:
                check_sigma2(sigma2, 1);
                head_out = gaussian_attention(q, keys[0], v, sigma2[0], cfg.causal);
                break;
            case Variant::MGK:
                head_out = mgk_attention(q, keys, v, head.keys.pi, sigma2, cfg.estep, cfg.kernel,
                                         cfg.causal);
                break;
            case Variant::Linear:
                head_out = linear_attention(q, keys[0], v, cfg.causal);
                break;
            case Variant::MLK:
                head_out = mlk_attention(q, keys, v, head.keys.pi, cfg.causal);
                break;
        }
        outputs.push_back(head_out.output);
        result.heads.push_back(std::move(head_out));
    }

    const Tensor cat = (outputs.size() == 1) ? outputs[0] : concat_cols(outputs);
    if (params.w_o.rows() != cfg.heads * dv || params.w_o.cols() != cfg.heads * dv) {
        throw config_error("w_o is " + params.w_o.shape_str() + ", config wants square side " +
                           std::to_string(cfg.heads * dv));
    }
    result.output = matmul(cat, transpose(params.w_o));
    return result;
}

}  // namespace mgk
