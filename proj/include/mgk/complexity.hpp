// FLOP and parameter accounting for softmax attention versus mixture-key
// attention, in three forms: exact closed-form counts, the simplified
// two-component closed form, and an instrumented count tallied from an
// actually executed forward pass.
//
// Counting conventions (shared by the closed forms and the instrumented run):
// an NxK by KxC matrix product costs N*C*(2K-1); every score kernel costs a
// dot product's worth per (query, key, component) triple regardless of kernel
// (the distance form's extra subtractions are excluded); mixing the M
// component masses costs M-1 additions per pair; exponentials, divisions,
// the mixing-weight multiplications, and the softmax normalizer are excluded.
// Mixture attention runs H/M heads against softmax's H, and its output
// projection maps the (H/M)*D concatenation back up to the H*D model width.
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "mgk/attention.hpp"

namespace mgk::complexity {

using Count = std::int64_t;

// N^2 H(4D-1) + NHD(6 D_x + 2HD - 5)
Count softmax_flops(Count n, Count h, Count d, Count d_x);

// The exact component form (H/M)(N^2((2M+2)D-1) + ND((M+2)(2 D_x - 1) - 1))
// + NHD(2(H/M)D - 1); requires H divisible by M.
Count mgk_flops(Count n, Count h, Count d, Count d_x, Count m);

// The simplified two-component form N^2 H(3D - 0.5) + NHD(4 D_x + HD - 4);
// requires even H. Differs from mgk_flops(..., m=2) by NHD/2; both are
// reported so the gap stays visible.
Count mgk_flops_paper(Count n, Count h, Count d, Count d_x);

// 3 H D D_x + (HD)^2
Count softmax_params(Count h, Count d, Count d_x);

// 2 H D D_x + (HD)^2 / 2 + H for the half-head two-component setup; even H.
Count mgk_params(Count h, Count d, Count d_x);

struct ComplexityReport {
    Count n = 0, h = 0, d = 0, d_x = 0, m = 0;
    Count softmax_flops = 0;
    Count mgk_flops = 0;
    Count mgk_flops_paper = 0;  // 0 when M != 2
    Count softmax_params = 0;
    Count mgk_params = 0;       // 0 when M != 2
    double flops_ratio = 0.0;   // mgk_flops / softmax_flops
    double params_ratio = 0.0;  // mgk_params / softmax_params, 0 when M != 2
    std::optional<Count> instrumented_flops;
};

ComplexityReport analyze(Count n, Count h, Count d, Count d_x, Count m, bool instrumented);

// Runs the variant's forward pass at sequence length n with seeded parameters
// and tallies the conventions above from the shapes of the operations that
// executed. Supports the score-materializing variants (Softmax, Gaussian,
// MGK); Gaussian counts as a single-component mixture at full head count.
Count instrumented_count(const AttentionConfig& cfg, std::size_t n);

// Cross product of the two grids at fixed H, D_x, M.
std::vector<ComplexityReport> ratio_sweep(const std::vector<Count>& ns,
                                          const std::vector<Count>& ds, Count h, Count d_x,
                                          Count m, bool instrumented = false);

// Header plus one row per report:
// N,H,D,D_x,M,softmax_flops,mgk_flops,mgk_flops_paper,softmax_params,
// mgk_params,flops_ratio,params_ratio,instrumented_flops
void write_csv(std::ostream& os, const std::vector<ComplexityReport>& rows);

}  // namespace mgk::complexity
