#include "mgk/reference.hpp"

#include <cmath>

namespace mgk::ref {

namespace {

double dot_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) acc += a.at(i, c) * b.at(j, c);
    return acc;
}

double sqdist_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double diff = a.at(i, c) - b.at(j, c);
        acc += diff * diff;
    }
    return acc;
}

Tensor phi_map(const Tensor& t) {
    Tensor out(t.rows(), t.cols());
    auto& ov = out.mutable_data();
    for (std::size_t i = 0; i < t.size(); ++i) ov[i] = phi(t.data()[i]);
    return out;
}

Tensor weighted_average(const std::vector<std::vector<double>>& w, const Tensor& v) {
    const std::size_t n = w.size(), dv = v.cols();
    Tensor h(n, dv);
    auto& hv = h.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (double x : w[i]) z += x;
        for (std::size_t j = 0; j < w[i].size(); ++j) {
            for (std::size_t c = 0; c < dv; ++c) hv[i * dv + c] += w[i][j] * v.at(j, c) / z;
        }
    }
    return h;
}

}  // namespace

double phi(double u) { return u >= 0.0 ? u + 1.0 : std::exp(u); }

Tensor linear_attention_quadratic(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
    const Tensor pq = phi_map(q), pk = phi_map(k);
    std::vector<std::vector<double>> w(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const std::size_t last = causal ? i + 1 : k.rows();
        w[i].resize(last);
        for (std::size_t j = 0; j < last; ++j) w[i][j] = dot_rows(pq, i, pk, j);
    }
    return weighted_average(w, v);
}

Tensor mlk_attention_quadratic(const Tensor& q, const std::vector<Tensor>& keys, const Tensor& v,
                               const std::vector<double>& pi, bool causal) {
    const Tensor pq = phi_map(q);
    std::vector<Tensor> pk;
    for (const Tensor& k : keys) pk.push_back(phi_map(k));
    std::vector<std::vector<double>> w(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const std::size_t last = causal ? i + 1 : keys[0].rows();
        w[i].resize(last);
        for (std::size_t j = 0; j < last; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < keys.size(); ++r) acc += pi[r] * dot_rows(pq, i, pk[r], j);
            w[i][j] = acc;
        }
    }
    return weighted_average(w, v);
}

Tensor mgk_scores_direct(const Tensor& q, const std::vector<Tensor>& keys,
                         const std::vector<double>& pi, const std::vector<double>& sigma2,
                         EStep estep, Kernel kernel, bool causal) {
    const std::size_t n = q.rows(), nk = keys[0].rows(), m = keys.size();
    Tensor scores(n, nk);
    auto& sv = scores.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
            if (causal && j > i) continue;
            double w = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                const double logit = (kernel == Kernel::GaussianDistance)
                                         ? -sqdist_rows(q, i, keys[r], j) / (2.0 * sigma2[r])
                                         : dot_rows(q, i, keys[r], j) / sigma2[r];
                const double mass = std::exp(logit);
                if (estep == EStep::HardAssign) {
                    w = std::max(w, mass);
                } else {
                    w += pi[r] * mass;
                }
            }
            sv[i * nk + j] = w;
            z += w;
        }
        for (std::size_t j = 0; j < nk; ++j) sv[i * nk + j] /= z;
    }
    return scores;
}

Tensor softmax_scores_direct(const Tensor& q, const Tensor& k, bool causal) {
    const std::size_t n = q.rows(), nk = k.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores(n, nk);
    auto& sv = scores.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
            if (causal && j > i) continue;
            sv[i * nk + j] = std::exp(dot_rows(q, i, k, j) * scale);
            z += sv[i * nk + j];
        }
        for (std::size_t j = 0; j < nk; ++j) sv[i * nk + j] /= z;
    }
    return scores;
}

}  // namespace mgk::ref
