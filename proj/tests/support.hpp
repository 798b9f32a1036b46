// Shared test oracles. Everything here is deliberately independent of the
// library's compute paths: matmul is a bare triple loop, gradients come from
// central differences, ranks from exact integer row reduction.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "doctest.h"
#include "mgk/rng.hpp"
#include "mgk/tensor.hpp"

namespace testsup {

inline mgk::Tensor matmul_oracle(const mgk::Tensor& a, const mgk::Tensor& b) {
    REQUIRE(a.cols() == b.rows());
    mgk::Tensor c(a.rows(), b.cols());
    auto& out = c.mutable_data();
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += a.at(i, p) * b.at(p, j);
            out[i * b.cols() + j] = acc;
        }
    return c;
}

inline mgk::Tensor random_tensor(std::size_t r, std::size_t c, mgk::SplitMix64& rng,
                                 double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = lo + (hi - lo) * rng.next_double();
    return mgk::Tensor(r, c, std::move(v));
}

// Central-difference gradient check for an op applied to `inputs`. The op is
// reduced to a scalar through a fixed random cotangent so every output entry
// contributes. Tape gradients must match finite differences entrywise.
inline void check_op_grad(const std::function<mgk::Tensor(const std::vector<mgk::Tensor>&)>& f,
                          const std::vector<mgk::Tensor>& inputs, double eps = 1e-4,
                          double tol = 1e-4) {
    mgk::SplitMix64 rng(7);
    mgk::Tensor probe = f(inputs);
    std::vector<double> w(probe.size());
    for (auto& x : w) x = 0.25 + rng.next_double();
    mgk::Tensor cot(probe.rows(), probe.cols(), w);

    auto scalar = [&](const std::vector<mgk::Tensor>& xs) { return mgk::sum(mgk::mul(f(xs), cot)); };

    mgk::Tape tape;
    std::vector<mgk::Tensor> tracked;
    tracked.reserve(inputs.size());
    for (const auto& x : inputs) tracked.push_back(tape.leaf(x));
    tape.backward(scalar(tracked));

    for (std::size_t p = 0; p < inputs.size(); ++p) {
        const mgk::Tensor ga = tape.grad(tracked[p]);
        for (std::size_t e = 0; e < inputs[p].size(); ++e) {
            auto eval = [&](double d) {
                std::vector<mgk::Tensor> xs = inputs;
                std::vector<double> buf = inputs[p].data();
                buf[e] += d;
                xs[p] = mgk::Tensor(inputs[p].rows(), inputs[p].cols(), std::move(buf));
                return scalar(xs).item();
            };
            const double fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            const double rel = std::fabs(ga.data()[e] - fd) / std::max(std::fabs(fd), 1e-6);
            INFO("input ", p, " entry ", e, " analytic ", ga.data()[e], " fd ", fd);
            CHECK(rel < tol);
        }
    }
}

// Exact rank of a matrix with small integer entries, by fraction-free
// Bareiss elimination over 64-bit integers.
inline std::size_t integer_rank_oracle(std::vector<std::vector<__int128>> m) {
    if (m.empty()) return 0;
    const std::size_t rows = m.size(), cols = m.front().size();
    std::size_t rank = 0;
    __int128 prev = 1;
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t piv = rank;
        while (piv < rows && m[piv][c] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(m[rank], m[piv]);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            for (std::size_t cc = c + 1; cc < cols; ++cc) {
                m[r][cc] = (m[rank][c] * m[r][cc] - m[r][c] * m[rank][cc]) / prev;
            }
            m[r][c] = 0;
        }
        prev = m[rank][c];
        ++rank;
    }
    return rank;
}

}  // namespace testsup
