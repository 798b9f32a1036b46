// Soft/hard E-step responsibilities, the prior M-step, and the mixture NLL
// diagnostic. These are value-level procedures (no tape): the attention
// kernels build their own differentiable score paths and reuse these for
// reporting and for the prior update between training steps.
//
// Throughout, `keys` holds M tensors of shape NxD: keys[r] row i is the r-th
// mixture component paired with query i.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mgk/tensor.hpp"

namespace mgk::em {

struct Responsibilities {
    Tensor gamma;                 // NxM, rows sum to 1
    std::vector<double> counts;   // length M, counts[r] = sum_i gamma(i,r)
};

// gamma(i,r) = pi_r exp(-||q_i - k_ir||^2 / 2 sigma2_r) / (normalizer over r),
// computed with per-row max subtraction in the exponent.
Responsibilities soft_responsibilities(const Tensor& q, const std::vector<Tensor>& keys,
                                       const std::vector<double>& pi,
                                       const std::vector<double>& sigma2);

// argmax_r exp(-||q_i - k_ir||^2 / 2 sigma2_r) per query; priors play no
// part, ties go to the smallest r.
std::vector<int> hard_assign(const Tensor& q, const std::vector<Tensor>& keys,
                             const std::vector<double>& sigma2);

// pi_r = counts_r / sum(counts); rejects empty input.
std::vector<double> mstep_prior_update(const Responsibilities& resp);

// Mean negative log-likelihood of the queries under the per-position mixture
// of spherical Gaussians, log-sum-exp stabilized:
//   -(1/N) sum_i log sum_r pi_r (2 pi sigma2_r)^(-D/2) exp(-||q_i-k_ir||^2 / 2 sigma2_r)
double nll_queries(const Tensor& q, const std::vector<Tensor>& keys,
                   const std::vector<double>& pi, const std::vector<double>& sigma2);

struct GmmFit {
    Tensor means;                // MxD fitted component means
    std::vector<double> pi;      // fitted priors
    double sigma2 = 1.0;         // the fixed variance the fit ran with
    double nll = 0.0;            // final mean NLL of the data under the fit
    std::size_t iterations = 0;
};

// Fits an M-component spherical GMM (means and priors; sigma2 stays fixed) to
// the rows of `data` by EM. Runs a handful of seeded initializations plus one
// nested initialization grown from the (M-1)-component fit, and keeps the best
// final NLL. The nested run starts at exactly the smaller model's likelihood,
// and EM never increases NLL, so fit M components is always at least as good
// as fitting M-1.
GmmFit fit_gmm(const Tensor& data, std::size_t components, double sigma2,
               std::size_t max_iters = 200, double tol = 1e-10, std::uint64_t seed = 1);

}  // namespace mgk::em
