// Dense 2-D double tensor with an optional reverse-mode differentiation tape.
//
// Tensors are immutable after construction; the only sanctioned mutation is a
// training loop rewriting leaf parameter buffers between tape lifetimes (see
// mutable_data). A Tape records one node per primitive operation and replays
// them in reverse on backward(). Tapes are single-owner: one execution context
// builds and consumes a tape; concurrent read-only evaluation of untracked
// tensors is safe.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgk/errors.hpp"

namespace mgk {

class Tape;

class Tensor {
  public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor from_rows(const std::vector<std::vector<double>>& rows);
    static Tensor identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    std::string shape_str() const;

    double at(std::size_t i, std::size_t j) const { return (*data_)[i * cols_ + j]; }
    double item() const;  // value of a 1x1 tensor

    const std::vector<double>& data() const { return *data_; }
    // In-place parameter update hook for optimizers. Callers must ensure no
    // live tape references this buffer.
    std::vector<double>& mutable_data() { return *data_; }

    bool tracked() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    // Untracked copy sharing the same buffer.
    Tensor detached() const;

    friend class Tape;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::shared_ptr<std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;  // grad handle into the tape
};

// Ordered record of primitive operations. Parent indices always precede the
// node that consumes them, so a single reverse sweep visits each node once.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a tensor as a tracked leaf (parameter) on this tape.
    Tensor leaf(const Tensor& value);
    Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> values);

    // Reverse sweep from a scalar loss. Every tracked leaf gets a gradient;
    // leaves the loss does not reach get zeros.
    void backward(const Tensor& loss);

    // Gradient of a tracked tensor after backward(); zeros if untouched.
    Tensor grad(const Tensor& t) const;

    std::size_t num_nodes() const { return nodes_.size(); }

    // --- internals used by the primitive ops ---
    struct Node {
        std::vector<int> parents;
        std::function<void(Tape&)> backprop;  // reads grad_buf(self), accumulates into parents
    };
    int push_node(Node node, std::size_t rows, std::size_t cols);
    std::vector<double>& grad_buf(int node);
    bool grad_touched(int node) const {
        const auto i = static_cast<std::size_t>(node);
        return i < grads_.size() && !grads_[i].empty();
    }
    // Attaches a freshly produced op result to this tape.
    void bind(Tensor& t, int node) {
        t.tape_ = this;
        t.node_ = node;
    }

  private:
    struct Slot {
        std::size_t rows = 0, cols = 0;
    };
    std::vector<Node> nodes_;
    std::vector<Slot> slots_;
    std::vector<std::vector<double>> grads_;
};

// --- primitive operations (all differentiable unless noted) ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise binary ops with the broadcasting the attention formulas need:
// equal shapes, (NxC, Nx1) row-wise scalar, (NxC, 1xC) column-wise, (NxC, 1x1),
// and the mirrored forms.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double c);
Tensor mul(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);

// Strictly positive feature map: u+1 for u >= 0, e^u for u < 0.
Tensor positive_feature_map(const Tensor& a);

// Elementwise maximum; ties keep `a`, and the gradient flows only to the
// winning operand (straight-through on the selection).
Tensor max_elem(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);       // 1x1
Tensor row_sums(const Tensor& a);  // Nx1
Tensor col_sums(const Tensor& a);  // 1xC

// Prefix sums over the row index: out[i] = sum_{i' <= i} in[i'].
Tensor cumsum_rows(const Tensor& a);

// Row-stabilized softmax. Mask entries equal to 0 are excluded from both the
// numerator and the normalizer and come out exactly 0. A row with no unmasked
// entry raises numeric_error.
Tensor softmax_rows(const Tensor& s, const Tensor* mask = nullptr);
Tensor log_softmax_rows(const Tensor& s);

// (i,j) -> ||q_i - k_j||^2, computed by direct per-pair accumulation.
Tensor pairwise_sqdist(const Tensor& q, const Tensor& k);

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Row gather (embedding lookup); backward scatter-adds into the table.
Tensor select_rows(const Tensor& table, const std::vector<int>& idx);

// out[i] = a(i, col_idx[i]) as an Nx1 tensor (label pick for cross-entropy).
Tensor gather_rowwise(const Tensor& a, const std::vector<int>& col_idx);

// Lower-triangular (j <= i) 0/1 mask, untracked.
Tensor causal_mask(std::size_t n);

}  // namespace mgk
