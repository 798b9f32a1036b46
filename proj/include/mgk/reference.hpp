// Slow, direct evaluations of the attention formulas, written as plain
// per-pair loops with none of the engine's stabilization or factorization
// tricks. They exist to be compared against: unit tests and the equivalence
// command both check the fast differentiable kernels against these.
#pragma once

#include <vector>

#include "mgk/attention.hpp"
#include "mgk/tensor.hpp"

namespace mgk::ref {

// The positive feature map, scalar form.
double phi(double u);

// h_i = sum_j (phi(q_i).phi(k_j)) v_j / sum_j phi(q_i).phi(k_j), j <= i when causal.
Tensor linear_attention_quadratic(const Tensor& q, const Tensor& k, const Tensor& v, bool causal);

// Mixture form: weights sum_r pi_r phi(q_i).phi(k_jr).
Tensor mlk_attention_quadratic(const Tensor& q, const std::vector<Tensor>& keys, const Tensor& v,
                               const std::vector<double>& pi, bool causal);

// Row-normalized mixture attention scores by direct evaluation.
Tensor mgk_scores_direct(const Tensor& q, const std::vector<Tensor>& keys,
                         const std::vector<double>& pi, const std::vector<double>& sigma2,
                         EStep estep, Kernel kernel, bool causal);

// Row-normalized exp(q_i . k_j / sqrt(D)) scores.
Tensor softmax_scores_direct(const Tensor& q, const Tensor& k, bool causal);

}  // namespace mgk::ref
