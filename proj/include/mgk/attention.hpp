// Differentiable forward passes for every attention variant: plain softmax,
// single-Gaussian, mixture-of-Gaussian-keys (soft or hard assignment, dot or
// distance kernel, independent or shared-shifted keys), linearized, and
// mixture-of-linear-keys.
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mgk/tensor.hpp"

namespace mgk {

enum class Variant { Softmax, Gaussian, MGK, Linear, MLK };
enum class Kernel { DotProduct, GaussianDistance };
enum class EStep { SoftLearnedPrior, SoftMStepPrior, HardAssign };
enum class KeyMode { IndependentProjections, SharedShifted };

// sqrt(D) for a single component; (2r-1)*sqrt(D) for component r thereafter,
// which lands on the (sqrt(D), 3*sqrt(D)) pair used for two components.
std::vector<double> default_sigma2(std::size_t components, std::size_t d);

struct AttentionConfig {
    Variant variant = Variant::MGK;
    std::size_t heads = 1;
    std::size_t components = 2;
    std::size_t d = 8;    // head query/key dimension
    std::size_t d_x = 8;  // input embedding dimension
    std::size_t d_v = 0;  // value dimension, 0 = same as d
    Kernel kernel = Kernel::GaussianDistance;
    EStep estep = EStep::SoftLearnedPrior;
    KeyMode key_mode = KeyMode::IndependentProjections;
    bool causal = false;
    std::vector<double> sigma2;  // empty = default_sigma2(components, d)

    std::size_t value_dim() const { return d_v == 0 ? d : d_v; }
    std::vector<double> resolved_sigma2() const;
};

// Throws config_error on any inconsistent field combination, e.g. a
// non-mixture variant with more than one component.
void validate(const AttentionConfig& cfg);

struct MixtureKeyParams {
    KeyMode mode = KeyMode::IndependentProjections;
    // IndependentProjections: M projection matrices DxD_x.
    // SharedShifted: exactly one projection plus M offset rows (b_r below).
    std::vector<Tensor> w_kr;
    std::vector<Tensor> b_r;  // SharedShifted: M offsets of shape 1xD
    // Mixing weights, 1xM, stored unnormalized (positive) and normalized on
    // use so they can be learned without a simplex constraint.
    Tensor pi;
    // Per-component variances; empty means the caller's config default.
    std::vector<double> sigma2;

    std::size_t components() const {
        return mode == KeyMode::IndependentProjections ? w_kr.size() : b_r.size();
    }
};

struct HeadParams {
    Tensor w_q;  // DxD_x
    Tensor w_v;  // D_vxD_x
    MixtureKeyParams keys;
};

struct ProjectionParams {
    std::vector<HeadParams> heads;
    Tensor w_o;  // (H*D_v)x(H*D_v), applied as h_cat * w_o^T
};

struct AttentionOutput {
    Tensor output;                            // NxD_v
    std::optional<Tensor> scores;             // NxN row-stochastic; absent for Linear/MLK
    std::optional<Tensor> responsibilities;   // NxM, soft mixture variants only (untracked)
};

struct MultiHeadResult {
    Tensor output;  // Nx(H*D_v)
    std::vector<AttentionOutput> heads;
};

// k_jr = x_j W_Kr^T (IndependentProjections) or x_j W_K^T + b_r (SharedShifted).
std::vector<Tensor> make_keys(const Tensor& x, const MixtureKeyParams& params);

// A = softmax(q k^T / sqrt(D)) row-wise; output = A v.
AttentionOutput softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal);

// A(i,j) proportional to exp(-||q_i - k_j||^2 / (2 sigma2)), row-normalized.
AttentionOutput gaussian_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   double sigma2, bool causal);

// Mixture scores. Soft: A(i,j) proportional to sum_r pi_r exp(L_r(i,j)); hard:
// max over r of the component score, priors ignored, ties to the smallest r.
// L_r is -||q_i - k_jr||^2 / (2 sigma2_r) for the distance kernel and
// q_i . k_jr / sigma2_r for the dot kernel. The causal mask is applied after
// mixing over r, before normalizing over j. `pi` is 1xM, normalized on use.
AttentionOutput mgk_attention(const Tensor& q, const std::vector<Tensor>& keys, const Tensor& v,
                              const Tensor& pi, const std::vector<double>& sigma2, EStep estep,
                              Kernel kernel, bool causal);

// h_i = phi(q_i)^T (sum_j phi(k_j) v_j^T) / (phi(q_i)^T sum_j phi(k_j)),
// prefix sums over j <= i when causal. Scores are never materialized.
AttentionOutput linear_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal);

// As linear_attention with the keys replaced by the pi-weighted sum of the
// feature-mapped component keys.
AttentionOutput mlk_attention(const Tensor& q, const std::vector<Tensor>& keys, const Tensor& v,
                              const Tensor& pi, bool causal);

// Runs every head, concatenates the per-head outputs along features, and
// applies the output projection. Per-head sigma2 in MixtureKeyParams wins
// over the config default when present.
MultiHeadResult multi_head(const Tensor& x, const ProjectionParams& params,
                           const AttentionConfig& cfg);

}  // namespace mgk
