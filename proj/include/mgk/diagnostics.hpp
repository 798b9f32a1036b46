// Empirical analysis instruments: attention-matrix rank via an in-library
// Jacobi SVD, rank distributions over forward passes, head-redundancy
// similarity, and CSV export of attention matrices for external plotting.
#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mgk/attention.hpp"
#include "mgk/tensor.hpp"

namespace mgk::diag {

struct RankHistogram {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::vector<std::size_t> ranks;  // one entry per drawn matrix
    double threshold = 1e-6;
    std::uint64_t seed = 0;
};

// Number of singular values strictly above `threshold`, computed by one-sided
// Jacobi rotations iterated until every column pair is orthogonal to within
// 1e-12 relative. Square matrices only.
std::size_t matrix_rank(const Tensor& a, double threshold = 1e-6);

// Per-head attention score matrices of one forward pass, indexed
// [layer][head]. rank_distribution stays agnostic of how the model is built;
// the caller closes over it.
using ScoreSource = std::function<std::vector<std::vector<Tensor>>(const Tensor& x)>;

// Draws `count` inputs from `sample` (with replacement, seeded), runs the
// source on each, and collects the rank of every attention matrix it returns.
// One histogram per (layer, head), layer-major. Every forward must report the
// same layer/head layout.
std::vector<RankHistogram> rank_distribution(const ScoreSource& scores_for,
                                             const std::vector<Tensor>& sample, std::size_t count,
                                             double threshold = 1e-6, std::uint64_t seed = 0);

// Pairwise redundancy: out(h, h') = mean |A_h - A_h'| over all entries.
// Symmetric, non-negative, zero diagonal. Needs at least two heads of equal
// shape.
Tensor head_similarity(const std::vector<Tensor>& heads);

// JSON array of {layer, head, ranks, threshold, seed} objects.
void write_rank_report(std::ostream& os, const std::vector<RankHistogram>& histograms);

// One CSV per matrix: N rows of N comma-separated values at 17 significant
// digits, rows separated by newlines. Requires materialized scores.
void dump_attention(const AttentionOutput& head, const std::string& path);

// Writes every head of a multi-head result to `<path_prefix>_head<h>.csv` and
// returns the paths written.
std::vector<std::string> dump_attention(const MultiHeadResult& result,
                                        const std::string& path_prefix);

}  // namespace mgk::diag
