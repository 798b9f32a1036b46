#include "mgk/gradcheck.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <utility>

#include "mgk/errors.hpp"
#include "mgk/rng.hpp"

namespace mgk {

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, double scale, SplitMix64& rng) {
    Tensor t(rows, cols);
    for (double& v : t.mutable_data()) v = scale * rng.next_normal();
    return t;
}

bool is_mixture(const AttentionConfig& cfg) {
    return cfg.variant == Variant::MGK || cfg.variant == Variant::MLK;
}

ProjectionParams random_params(const AttentionConfig& cfg, SplitMix64& rng) {
    const std::size_t d_v = cfg.value_dim();
    ProjectionParams params;
    params.heads.resize(cfg.heads);
    for (auto& head : params.heads) {
        head.w_q = random_tensor(cfg.d, cfg.d_x, 0.5, rng);
        head.w_v = random_tensor(d_v, cfg.d_x, 0.5, rng);
        head.keys.mode = cfg.key_mode;
        if (cfg.key_mode == KeyMode::IndependentProjections) {
            for (std::size_t r = 0; r < cfg.components; ++r) {
                head.keys.w_kr.push_back(random_tensor(cfg.d, cfg.d_x, 0.5, rng));
            }
        } else {
            head.keys.w_kr.push_back(random_tensor(cfg.d, cfg.d_x, 0.5, rng));
            for (std::size_t r = 0; r < cfg.components; ++r) {
                head.keys.b_r.push_back(random_tensor(1, cfg.d, 0.5, rng));
            }
        }
        head.keys.pi = Tensor(1, cfg.components, 1.0);
        if (is_mixture(cfg)) {
            for (double& v : head.keys.pi.mutable_data()) v = 0.5 + rng.next_double();
        }
    }
    params.w_o = random_tensor(cfg.heads * d_v, cfg.heads * d_v, 0.5, rng);
    return params;
}

struct GroupRef {
    std::string group;
    Tensor* value;
};

std::vector<GroupRef> collect(ProjectionParams& params, const AttentionConfig& cfg) {
    std::vector<GroupRef> refs;
    for (auto& head : params.heads) {
        refs.push_back({"w_q", &head.w_q});
        refs.push_back({"w_v", &head.w_v});
        for (auto& w : head.keys.w_kr) refs.push_back({"keys", &w});
        for (auto& b : head.keys.b_r) refs.push_back({"b_r", &b});
        if (is_mixture(cfg)) refs.push_back({"pi", &head.keys.pi});
    }
    refs.push_back({"w_o", &params.w_o});
    return refs;
}

double loss_at(const Tensor& x, const ProjectionParams& params, const AttentionConfig& cfg,
               const Tensor& cot) {
    const MultiHeadResult res = multi_head(x, params, cfg);
    const auto& o = res.output.data();
    const auto& c = cot.data();
    double total = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) total += o[i] * c[i];
    return total;
}

}  // namespace

std::vector<GradCheckResult> gradcheck_attention(const std::string& label,
                                                 const AttentionConfig& cfg, std::size_t n,
                                                 std::uint64_t seed, double step, double floor) {
    validate(cfg);
    if (n < 1) throw config_error("gradcheck_attention: n must be at least 1");
    if (!(step > 0.0) || !(floor > 0.0)) {
        throw config_error("gradcheck_attention: step and floor must be positive");
    }

    SplitMix64 rng(seed);
    ProjectionParams params = random_params(cfg, rng);
    const Tensor x = random_tensor(n, cfg.d_x, 0.7, rng);
    const Tensor cot = random_tensor(n, cfg.heads * cfg.value_dim(), 1.0, rng);
    const std::vector<GroupRef> refs = collect(params, cfg);

    // Analytic gradients. Leaf copies share the parameter buffers, so the
    // tape must be gone before the difference quotients rewrite them.
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        ProjectionParams tracked = params;
        std::vector<GroupRef> tracked_refs = collect(tracked, cfg);
        for (auto& ref : tracked_refs) *ref.value = tape.leaf(*ref.value);
        const MultiHeadResult res = multi_head(x, tracked, cfg);
        tape.backward(sum(mul(res.output, cot)));
        for (auto& ref : tracked_refs) analytic.push_back(tape.grad(*ref.value).data());
    }

    std::map<std::string, double> worst;
    for (std::size_t r = 0; r < refs.size(); ++r) {
        std::vector<double>& values = refs[r].value->mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + step;
            const double up = loss_at(x, params, cfg, cot);
            values[i] = orig - step;
            const double down = loss_at(x, params, cfg, cot);
            values[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double rel = std::abs(analytic[r][i] - numeric) /
                               std::max(std::abs(numeric), floor);
            double& slot = worst[refs[r].group];
            if (rel > slot) slot = rel;
        }
    }

    std::vector<GradCheckResult> results;
    for (const auto& [group, err] : worst) results.push_back({label, group, err});
    return results;
}

std::vector<GradCheckResult> standard_gradcheck(std::uint64_t seed) {
    struct Case {
        std::string label;
        AttentionConfig cfg;
    };
    std::vector<Case> cases;

    const auto base = [] {
        AttentionConfig cfg;
        cfg.heads = 2;
        cfg.d = 4;
        cfg.d_x = 6;
        cfg.components = 1;
        return cfg;
    };

    {
        Case c{"softmax", base()};
        c.cfg.variant = Variant::Softmax;
        cases.push_back(c);
    }
    {
        Case c{"gaussian-causal", base()};
        c.cfg.variant = Variant::Gaussian;
        c.cfg.causal = true;
        cases.push_back(c);
    }
    {
        Case c{"linear", base()};
        c.cfg.variant = Variant::Linear;
        cases.push_back(c);
    }
    {
        Case c{"linear-causal", base()};
        c.cfg.variant = Variant::Linear;
        c.cfg.causal = true;
        cases.push_back(c);
    }
    {
        Case c{"mgk-soft-distance", base()};
        c.cfg.variant = Variant::MGK;
        c.cfg.components = 2;
        cases.push_back(c);
    }
    {
        Case c{"mgk-soft-dot-shifted", base()};
        c.cfg.variant = Variant::MGK;
        c.cfg.components = 2;
        c.cfg.kernel = Kernel::DotProduct;
        c.cfg.key_mode = KeyMode::SharedShifted;
        cases.push_back(c);
    }
    {
        Case c{"mgk-mstep-distance", base()};
        c.cfg.variant = Variant::MGK;
        c.cfg.components = 2;
        c.cfg.estep = EStep::SoftMStepPrior;
        cases.push_back(c);
    }
    {
        Case c{"mgk-hard-distance-causal", base()};
        c.cfg.variant = Variant::MGK;
        c.cfg.components = 2;
        c.cfg.estep = EStep::HardAssign;
        c.cfg.causal = true;
        cases.push_back(c);
    }
    {
        Case c{"mlk", base()};
        c.cfg.variant = Variant::MLK;
        c.cfg.components = 2;
        cases.push_back(c);
    }

    std::vector<GradCheckResult> all;
    std::uint64_t salt = 0;
    for (const auto& c : cases) {
        auto rows = gradcheck_attention(c.label, c.cfg, 5, seed + salt++);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    return all;
}

}  // namespace mgk
