#include "mgk/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgk/rng.hpp"

namespace mgk::em {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_mixture(const Tensor& q, const std::vector<Tensor>& keys,
                   const std::vector<double>* pi, const std::vector<double>& sigma2) {
    const std::size_t m = keys.size();
    if (m == 0) throw config_error("mixture has no components");
    if (sigma2.size() != m) {
        throw config_error("sigma2 has " + std::to_string(sigma2.size()) + " entries for " +
                           std::to_string(m) + " components");
    }
    for (double s : sigma2) {
        if (!(s > 0.0)) throw config_error("sigma2 must be strictly positive");
    }
    if (pi != nullptr) {
        if (pi->size() != m) {
            throw config_error("pi has " + std::to_string(pi->size()) + " entries for " +
                               std::to_string(m) + " components");
        }
        double total = 0.0;
        for (double p : *pi) {
            if (p < 0.0) throw config_error("pi entries must be non-negative");
            total += p;
        }
        if (std::fabs(total - 1.0) > 1e-6) {
            throw config_error("pi must be normalized, sums to " + std::to_string(total));
        }
    }
    for (const Tensor& k : keys) {
        if (k.rows() != q.rows() || k.cols() != q.cols()) {
            throw shape_error("component keys " + k.shape_str() + " do not match queries " +
                              q.shape_str());
        }
    }
}

double sqdist_row(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double diff = a.at(i, c) - b.at(j, c);
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

Responsibilities soft_responsibilities(const Tensor& q, const std::vector<Tensor>& keys,
                                       const std::vector<double>& pi,
                                       const std::vector<double>& sigma2) {
    check_mixture(q, keys, &pi, sigma2);
    const std::size_t n = q.rows(), m = keys.size();
    Tensor gamma(n, m);
    auto& gv = gamma.mutable_data();
    std::vector<double> counts(m, 0.0);
    std::vector<double> logit(m);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < m; ++r) {
            logit[r] = std::log(pi[r]) - sqdist_row(q, i, keys[r], i) / (2.0 * sigma2[r]);
            mx = std::max(mx, logit[r]);
        }
        if (!std::isfinite(mx)) {
            throw numeric_error("degenerate responsibility row " + std::to_string(i) +
                                ": no component has mass");
        }
        double z = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            gv[i * m + r] = std::exp(logit[r] - mx);
            z += gv[i * m + r];
        }
        for (std::size_t r = 0; r < m; ++r) {
            gv[i * m + r] /= z;
            counts[r] += gv[i * m + r];
        }
    }
    return Responsibilities{std::move(gamma), std::move(counts)};
}

std::vector<int> hard_assign(const Tensor& q, const std::vector<Tensor>& keys,
                             const std::vector<double>& sigma2) {
    check_mixture(q, keys, nullptr, sigma2);
    const std::size_t n = q.rows(), m = keys.size();
    std::vector<int> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -sqdist_row(q, i, keys[0], i) / (2.0 * sigma2[0]);
        for (std::size_t r = 1; r < m; ++r) {
            const double s = -sqdist_row(q, i, keys[r], i) / (2.0 * sigma2[r]);
            if (s > best) {  // strict: ties stay with the smaller index
                best = s;
                out[i] = static_cast<int>(r);
            }
        }
    }
    return out;
}

std::vector<double> mstep_prior_update(const Responsibilities& resp) {
    if (resp.gamma.rows() == 0 || resp.counts.empty()) {
        throw config_error("prior update on empty responsibilities");
    }
    double total = 0.0;
    for (double c : resp.counts) total += c;
    if (!(total > 0.0)) throw numeric_error("prior update: zero total count");
    std::vector<double> pi(resp.counts.size());
    for (std::size_t r = 0; r < pi.size(); ++r) pi[r] = resp.counts[r] / total;
    return pi;
}

double nll_queries(const Tensor& q, const std::vector<Tensor>& keys,
                   const std::vector<double>& pi, const std::vector<double>& sigma2) {
    check_mixture(q, keys, &pi, sigma2);
    const std::size_t n = q.rows(), m = keys.size();
    const double d = static_cast<double>(q.cols());
    if (n == 0) throw config_error("nll of empty query set");
    std::vector<double> logit(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < m; ++r) {
            logit[r] = std::log(pi[r]) - 0.5 * d * std::log(kTwoPi * sigma2[r]) -
                       sqdist_row(q, i, keys[r], i) / (2.0 * sigma2[r]);
            mx = std::max(mx, logit[r]);
        }
        if (!std::isfinite(mx)) {
            throw numeric_error("nll: query " + std::to_string(i) + " has zero mixture density");
        }
        double z = 0.0;
        for (std::size_t r = 0; r < m; ++r) z += std::exp(logit[r] - mx);
        acc += mx + std::log(z);
    }
    return -acc / static_cast<double>(n);
}

namespace {

// Mean NLL of data rows under component means (shared fixed variance).
double gmm_nll(const Tensor& data, const Tensor& means, const std::vector<double>& pi,
               double sigma2) {
    const std::size_t n = data.rows(), m = means.rows();
    const double d = static_cast<double>(data.cols());
    double acc = 0.0;
    std::vector<double> logit(m);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < m; ++r) {
            logit[r] = std::log(pi[r]) - 0.5 * d * std::log(kTwoPi * sigma2) -
                       sqdist_row(data, i, means, r) / (2.0 * sigma2);
            mx = std::max(mx, logit[r]);
        }
        double z = 0.0;
        for (std::size_t r = 0; r < m; ++r) z += std::exp(logit[r] - mx);
        acc += mx + std::log(z);
    }
    return -acc / static_cast<double>(n);
}

GmmFit run_em(const Tensor& data, Tensor means, std::vector<double> pi, double sigma2,
              std::size_t max_iters, double tol) {
    const std::size_t n = data.rows(), m = means.rows(), d = data.cols();
    double nll = gmm_nll(data, means, pi, sigma2);
    std::size_t it = 0;
    std::vector<double> logit(m), gam(m);
    for (; it < max_iters; ++it) {
        std::vector<double> counts(m, 0.0);
        std::vector<double> sums(m * d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < m; ++r) {
                logit[r] = std::log(pi[r]) - sqdist_row(data, i, means, r) / (2.0 * sigma2);
                mx = std::max(mx, logit[r]);
            }
            double z = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                gam[r] = std::exp(logit[r] - mx);
                z += gam[r];
            }
            for (std::size_t r = 0; r < m; ++r) {
                const double g = gam[r] / z;
                counts[r] += g;
                for (std::size_t c = 0; c < d; ++c) sums[r * d + c] += g * data.at(i, c);
            }
        }
        auto& mv = means.mutable_data();
        for (std::size_t r = 0; r < m; ++r) {
            pi[r] = counts[r] / static_cast<double>(n);
            if (counts[r] > 1e-12) {
                for (std::size_t c = 0; c < d; ++c) mv[r * d + c] = sums[r * d + c] / counts[r];
            }
        }
        const double next = gmm_nll(data, means, pi, sigma2);
        const bool done = nll - next < tol;
        nll = next;
        if (done) {
            ++it;
            break;
        }
    }
    return GmmFit{std::move(means), std::move(pi), sigma2, nll, it};
}

}  // namespace

GmmFit fit_gmm(const Tensor& data, std::size_t components, double sigma2, std::size_t max_iters,
               double tol, std::uint64_t seed) {
    if (components == 0) throw config_error("fit_gmm: need at least one component");
    if (data.rows() == 0) throw config_error("fit_gmm: empty data");
    if (!(sigma2 > 0.0)) throw config_error("fit_gmm: sigma2 must be strictly positive");
    const std::size_t n = data.rows(), d = data.cols();

    if (components == 1) {
        Tensor mean(1, d);
        auto& mv = mean.mutable_data();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) mv[c] += data.at(i, c) / static_cast<double>(n);
        return GmmFit{mean, {1.0}, sigma2, gmm_nll(data, mean, {1.0}, sigma2), 0};
    }

    const GmmFit smaller = fit_gmm(data, components - 1, sigma2, max_iters, tol, seed);

    // Nested start: copy the smaller fit and split its last component into two
    // identical halves. The mixture density, hence the NLL, is unchanged, so
    // this run finishes at or below the smaller model's NLL.
    Tensor nested(components, d);
    {
        auto& mv = nested.mutable_data();
        for (std::size_t r = 0; r + 1 < components; ++r)
            for (std::size_t c = 0; c < d; ++c) mv[r * d + c] = smaller.means.at(r, c);
        for (std::size_t c = 0; c < d; ++c)
            mv[(components - 1) * d + c] = smaller.means.at(components - 2, c);
    }
    std::vector<double> nested_pi = smaller.pi;
    const double last = nested_pi.back();
    nested_pi.back() = last / 2.0;
    nested_pi.push_back(last / 2.0);
    GmmFit best = run_em(data, nested, nested_pi, sigma2, max_iters, tol);

    SplitMix64 rng(seed);
    for (int restart = 0; restart < 2; ++restart) {
        Tensor means(components, d);
        auto& mv = means.mutable_data();
        for (std::size_t r = 0; r < components; ++r) {
            const std::size_t pick = rng.next_below(n);
            for (std::size_t c = 0; c < d; ++c) mv[r * d + c] = data.at(pick, c);
        }
        std::vector<double> pi(components, 1.0 / static_cast<double>(components));
        GmmFit fit = run_em(data, means, pi, sigma2, max_iters, tol);
        if (fit.nll < best.nll) best = std::move(fit);
    }
    return best;
}

}  // namespace mgk::em
