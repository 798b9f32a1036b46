// Finite-difference audit of the attention gradients, used by the gradcheck
// command and the release gate.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mgk/attention.hpp"

namespace mgk {

struct GradCheckResult {
    std::string variant;  // configuration label, e.g. "mgk-soft-distance"
    std::string group;    // parameter group name
    double max_rel_error = 0.0;
};

// Builds one random instance of the configuration, differentiates
// sum(output * C) for a fixed random cotangent C, and compares every analytic
// parameter gradient against a central difference quotient. The relative
// error denominator is max(|numeric|, floor). Returns one row per parameter
// group present in the configuration.
std::vector<GradCheckResult> gradcheck_attention(const std::string& label,
                                                 const AttentionConfig& cfg, std::size_t n,
                                                 std::uint64_t seed, double step = 1e-4,
                                                 double floor = 1e-6);

// Canonical sweep: every variant, both kernels, both key modes, soft, m-step
// and hard assignment, causal and bidirectional, all at head width <= 32.
std::vector<GradCheckResult> standard_gradcheck(std::uint64_t seed);

}  // namespace mgk
