#include "mgk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mgk {

namespace {

std::string shape_to_str(std::size_t r, std::size_t c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

// C(mxn) += A(mxk) * B(kxn)
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(mxk) += A(mxn) * B(kxn)^T
void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                   std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C(kxn) += A(mxk)^T * B(mxn)
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tape* result_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tp = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->tracked()) continue;
        if (tp == nullptr) {
            tp = t->tape();
        } else if (tp != t->tape()) {
            throw contract_error("operands tracked on different tapes");
        }
    }
    return tp;
}

Tensor finish(Tensor out, Tape* tp, std::vector<int> parents,
              std::function<void(Tape&, int)> bp) {
    if (tp == nullptr) return out;
    const int self = static_cast<int>(tp->num_nodes());
    Tape::Node node;
    node.parents = std::move(parents);
    node.backprop = [self, bp = std::move(bp)](Tape& t) { bp(t, self); };
    tp->push_node(std::move(node), out.rows(), out.cols());
    tp->bind(out, self);
    return out;
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(std::make_shared<std::vector<double>>(rows * cols, fill)) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols) {
    if (values.size() != rows * cols) {
        throw shape_error("tensor data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_to_str(rows, cols));
    }
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Tensor(0, 0);
    const std::size_t c = rows.front().size();
    std::vector<double> values;
    values.reserve(rows.size() * c);
    for (const auto& r : rows) {
        if (r.size() != c) throw shape_error("ragged row in tensor literal");
        values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor(rows.size(), c, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) (*t.data_)[i * n + i] = 1.0;
    return t;
}

std::string Tensor::shape_str() const { return shape_to_str(rows_, cols_); }

double Tensor::item() const {
    if (size() != 1) throw contract_error("item() on non-scalar tensor " + shape_str());
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
}

// ---------------------------------------------------------------- Tape

Tensor Tape::leaf(const Tensor& value) {
    Tensor t = value.detached();
    const int self = static_cast<int>(nodes_.size());
    push_node(Node{}, t.rows(), t.cols());
    bind(t, self);
    return t;
}

Tensor Tape::leaf(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return leaf(Tensor(rows, cols, std::move(values)));
}

int Tape::push_node(Node node, std::size_t rows, std::size_t cols) {
    nodes_.push_back(std::move(node));
    slots_.push_back(Slot{rows, cols});
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int node) {
    auto& buf = grads_[static_cast<std::size_t>(node)];
    if (buf.empty()) {
        const Slot& s = slots_[static_cast<std::size_t>(node)];
        buf.assign(s.rows * s.cols, 0.0);
    }
    return buf;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.tracked() || loss.tape() != this) {
        throw contract_error("backward: loss is not tracked on this tape");
    }
    if (loss.size() != 1) {
        throw contract_error("backward: loss must be scalar, got " + loss.shape_str());
    }
    grads_.assign(nodes_.size(), {});
    grad_buf(loss.node())[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (grads_[i].empty()) continue;  // loss does not reach this node
        if (nodes_[i].backprop) nodes_[i].backprop(*this);
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (!t.tracked() || t.tape() != this) {
        throw contract_error("grad: tensor is not tracked on this tape");
    }
    const auto i = static_cast<std::size_t>(t.node());
    if (i >= grads_.size() || grads_[i].empty()) return Tensor(t.rows(), t.cols(), 0.0);
    return Tensor(t.rows(), t.cols(), grads_[i]);
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw shape_error("matmul: inner extents differ, " + a.shape_str() + " vs " +
                          b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n);
    matmul_acc(a.data().data(), b.data().data(), const_cast<std::vector<double>&>(out.data()).data(),
               m, k, n);

    Tape* tp = result_tape({&a, &b});
    const int aid = (a.tracked() ? a.node() : -1);
    const int bid = (b.tracked() ? b.node() : -1);
    return finish(std::move(out), tp, {aid, bid}, [a, b, aid, bid, m, k, n](Tape& t, int self) {
        const auto& g = t.grad_buf(self);
        if (aid >= 0) matmul_nt_acc(g.data(), b.data().data(), t.grad_buf(aid).data(), m, n, k);
        if (bid >= 0) matmul_tn_acc(a.data().data(), g.data(), t.grad_buf(bid).data(), k, m, n);
    });
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> vals(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) vals[j * m + i] = a.at(i, j);
    Tensor out(n, m, std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, m, n](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

// ------------------------------------------------------- broadcast binary

namespace {

enum class BinOp { Add, Sub, Mul, Div };

void check_broadcast(const Tensor& a, const Tensor& b, const char* name) {
    const bool rows_ok = a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
    const bool cols_ok = a.cols() == b.cols() || a.cols() == 1 || b.cols() == 1;
    if (!rows_ok || !cols_ok) {
        throw shape_error(std::string(name) + ": shapes not broadcastable, " + a.shape_str() +
                          " vs " + b.shape_str());
    }
}

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
    check_broadcast(a, b, name);
    const std::size_t m = a.rows() == 1 ? b.rows() : a.rows();
    const std::size_t n = a.cols() == 1 ? b.cols() : a.cols();
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();

    auto idx_a = [ar, ac](std::size_t i, std::size_t j) {
        return (ar == 1 ? 0 : i) * ac + (ac == 1 ? 0 : j);
    };
    auto idx_b = [br, bc](std::size_t i, std::size_t j) {
        return (br == 1 ? 0 : i) * bc + (bc == 1 ? 0 : j);
    };

    std::vector<double> vals(m * n);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double x = av[idx_a(i, j)], y = bv[idx_b(i, j)];
            double v = 0.0;
            switch (op) {
                case BinOp::Add: v = x + y; break;
                case BinOp::Sub: v = x - y; break;
                case BinOp::Mul: v = x * y; break;
                case BinOp::Div: v = x / y; break;
            }
            vals[i * n + j] = v;
        }
    }
    Tensor out(m, n, std::move(vals));

    Tape* tp = result_tape({&a, &b});
    const int aid = (a.tracked() ? a.node() : -1);
    const int bid = (b.tracked() ? b.node() : -1);
    return finish(std::move(out), tp, {aid, bid},
                  [a, b, aid, bid, op, m, n, idx_a, idx_b](Tape& t, int self) {
                      const auto& g = t.grad_buf(self);
                      const auto& av = a.data();
                      const auto& bv = b.data();
                      std::vector<double>* ga = (aid >= 0 ? &t.grad_buf(aid) : nullptr);
                      std::vector<double>* gb = (bid >= 0 ? &t.grad_buf(bid) : nullptr);
                      for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < n; ++j) {
                              const double gv = g[i * n + j];
                              const std::size_t ia = idx_a(i, j), ib = idx_b(i, j);
                              switch (op) {
                                  case BinOp::Add:
                                      if (ga) (*ga)[ia] += gv;
                                      if (gb) (*gb)[ib] += gv;
                                      break;
                                  case BinOp::Sub:
                                      if (ga) (*ga)[ia] += gv;
                                      if (gb) (*gb)[ib] -= gv;
                                      break;
                                  case BinOp::Mul:
                                      if (ga) (*ga)[ia] += gv * bv[ib];
                                      if (gb) (*gb)[ib] += gv * av[ia];
                                      break;
                                  case BinOp::Div: {
                                      const double y = bv[ib];
                                      if (ga) (*ga)[ia] += gv / y;
                                      if (gb) (*gb)[ib] -= gv * av[ia] / (y * y);
                                      break;
                                  }
                              }
                          }
                      }
                  });
}

// Elementwise unary op with value-level forward and pointwise derivative.
Tensor unary_op(const Tensor& a, double (*f)(double), double (*df)(double, double)) {
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) vals[i] = f(a.data()[i]);
    Tensor out(a.rows(), a.cols(), std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    auto saved = out.data();  // copy of outputs for derivative reuse
    return finish(std::move(out), tp, {aid}, [a, aid, df, saved](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(a.data()[i], saved[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Div, "div"); }

Tensor add(const Tensor& a, double c) { return add(a, Tensor(1, 1, {c})); }
Tensor mul(const Tensor& a, double c) { return mul(a, Tensor(1, 1, {c})); }

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor positive_feature_map(const Tensor& a) {
    return unary_op(a, [](double x) { return x >= 0.0 ? x + 1.0 : std::exp(x); },
                    [](double x, double y) { return x >= 0.0 ? 1.0 : y; });
}

Tensor max_elem(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw shape_error("max_elem: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    }
    std::vector<double> vals(a.size());
    std::vector<char> a_wins(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a_wins[i] = (a.data()[i] >= b.data()[i]) ? 1 : 0;  // tie keeps the left operand
        vals[i] = a_wins[i] ? a.data()[i] : b.data()[i];
    }
    Tensor out(a.rows(), a.cols(), std::move(vals));
    Tape* tp = result_tape({&a, &b});
    const int aid = (a.tracked() ? a.node() : -1);
    const int bid = (b.tracked() ? b.node() : -1);
    return finish(std::move(out), tp, {aid, bid},
                  [aid, bid, a_wins = std::move(a_wins)](Tape& t, int self) {
                      const auto& g = t.grad_buf(self);
                      std::vector<double>* ga = (aid >= 0 ? &t.grad_buf(aid) : nullptr);
                      std::vector<double>* gb = (bid >= 0 ? &t.grad_buf(bid) : nullptr);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          if (a_wins[i]) {
                              if (ga) (*ga)[i] += g[i];
                          } else if (gb) {
                              (*gb)[i] += g[i];
                          }
                      }
                  });
}

// ---------------------------------------------------------------- sums

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor out(1, 1, {acc});
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, n = a.size()](Tape& t, int self) {
        if (aid < 0) return;
        const double g = t.grad_buf(self)[0];
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Tensor row_sums(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> vals(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) vals[i] += a.at(i, j);
    Tensor out(m, 1, std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, m, n](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
    });
}

Tensor col_sums(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> vals(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) vals[j] += a.at(i, j);
    Tensor out(1, n, std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, m, n](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
    });
}

Tensor cumsum_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> vals(m * n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            acc += a.at(i, j);
            vals[i * n + j] = acc;
        }
    }
    Tensor out(m, n, std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, m, n](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = m; i-- > 0;) {
                acc += g[i * n + j];
                ga[i * n + j] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------- softmax

Tensor softmax_rows(const Tensor& s, const Tensor* mask) {
    const std::size_t m = s.rows(), n = s.cols();
    if (mask != nullptr && (mask->rows() != m || mask->cols() != n)) {
        throw shape_error("softmax_rows: mask shape " + mask->shape_str() +
                          " does not match scores " + s.shape_str());
    }
    std::vector<double> vals(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (mask && mask->at(i, j) == 0.0) continue;
            mx = std::max(mx, s.at(i, j));
        }
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw numeric_error("softmax_rows: fully masked row " + std::to_string(i));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask && mask->at(i, j) == 0.0) continue;
            const double e = std::exp(s.at(i, j) - mx);
            vals[i * n + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) vals[i * n + j] /= z;
    }
    Tensor out(m, n, vals);
    Tape* tp = result_tape({&s});
    const int sid = (s.tracked() ? s.node() : -1);
    std::vector<char> keep(m * n, 1);
    if (mask) {
        for (std::size_t i = 0; i < m * n; ++i) keep[i] = mask->data()[i] != 0.0 ? 1 : 0;
    }
    return finish(std::move(out), tp, {sid},
                  [sid, m, n, a = std::move(vals), keep = std::move(keep)](Tape& t, int self) {
                      if (sid < 0) return;
                      const auto& g = t.grad_buf(self);
                      auto& gs = t.grad_buf(sid);
                      for (std::size_t i = 0; i < m; ++i) {
                          double dot = 0.0;
                          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * a[i * n + j];
                          for (std::size_t j = 0; j < n; ++j) {
                              if (!keep[i * n + j]) continue;
                              gs[i * n + j] += a[i * n + j] * (g[i * n + j] - dot);
                          }
                      }
                  });
}

Tensor log_softmax_rows(const Tensor& s) {
    const std::size_t m = s.rows(), n = s.cols();
    std::vector<double> vals(m * n);
    std::vector<double> soft(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, s.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(s.at(i, j) - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) {
            vals[i * n + j] = s.at(i, j) - lse;
            soft[i * n + j] = std::exp(vals[i * n + j]);
        }
    }
    Tensor out(m, n, std::move(vals));
    Tape* tp = result_tape({&s});
    const int sid = (s.tracked() ? s.node() : -1);
    return finish(std::move(out), tp, {sid},
                  [sid, m, n, soft = std::move(soft)](Tape& t, int self) {
                      if (sid < 0) return;
                      const auto& g = t.grad_buf(self);
                      auto& gs = t.grad_buf(sid);
                      for (std::size_t i = 0; i < m; ++i) {
                          double gsum = 0.0;
                          for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
                          for (std::size_t j = 0; j < n; ++j)
                              gs[i * n + j] += g[i * n + j] - soft[i * n + j] * gsum;
                      }
                  });
}

// ---------------------------------------------------------------- sqdist

Tensor pairwise_sqdist(const Tensor& q, const Tensor& k) {
    if (q.cols() != k.cols()) {
        throw shape_error("pairwise_sqdist: feature dims differ, " + q.shape_str() + " vs " +
                          k.shape_str());
    }
    const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols();
    std::vector<double> vals(nq * nk);
    for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < nk; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = q.at(i, c) - k.at(j, c);
                acc += diff * diff;
            }
            vals[i * nk + j] = acc;
        }
    }
    Tensor out(nq, nk, std::move(vals));
    Tape* tp = result_tape({&q, &k});
    const int qid = (q.tracked() ? q.node() : -1);
    const int kid = (k.tracked() ? k.node() : -1);
    return finish(std::move(out), tp, {qid, kid}, [q, k, qid, kid, nq, nk, d](Tape& t, int self) {
        const auto& g = t.grad_buf(self);
        std::vector<double>* gq = (qid >= 0 ? &t.grad_buf(qid) : nullptr);
        std::vector<double>* gk = (kid >= 0 ? &t.grad_buf(kid) : nullptr);
        for (std::size_t i = 0; i < nq; ++i) {
            for (std::size_t j = 0; j < nk; ++j) {
                const double gv = 2.0 * g[i * nk + j];
                if (gv == 0.0) continue;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = q.at(i, c) - k.at(j, c);
                    if (gq) (*gq)[i * d + c] += gv * diff;
                    if (gk) (*gk)[j * d + c] -= gv * diff;
                }
            }
        }
    });
}

// ---------------------------------------------------------------- layout ops

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (c0 >= c1 || c1 > a.cols()) {
        throw shape_error("slice_cols: invalid range [" + std::to_string(c0) + ", " +
                          std::to_string(c1) + ") for " + a.shape_str());
    }
    const std::size_t m = a.rows(), n = a.cols(), w = c1 - c0;
    std::vector<double> vals(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) vals[i * w + j] = a.at(i, c0 + j);
    Tensor out(m, w, std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, m, n, w, c0](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * n + c0 + j] += g[i * w + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw contract_error("concat_cols: no parts");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw shape_error("concat_cols: row mismatch, " + parts.front().shape_str() + " vs " +
                              p.shape_str());
        }
        n += p.cols();
    }
    std::vector<double> vals(m * n);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) vals[i * n + off + j] = p.at(i, j);
        off += p.cols();
    }
    Tensor out(m, n, std::move(vals));

    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    Tape* tp = nullptr;
    for (const Tensor* p : ptrs) {
        if (!p->tracked()) continue;
        if (tp == nullptr) tp = p->tape();
        else if (tp != p->tape()) throw contract_error("operands tracked on different tapes");
    }
    std::vector<int> ids;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        ids.push_back(p.tracked() ? p.node() : -1);
        widths.push_back(p.cols());
    }
    return finish(std::move(out), tp, ids,
                  [ids, widths, m, n](Tape& t, int self) {
                      const auto& g = t.grad_buf(self);
                      std::size_t off = 0;
                      for (std::size_t p = 0; p < ids.size(); ++p) {
                          const std::size_t w = widths[p];
                          if (ids[p] >= 0) {
                              auto& gp = t.grad_buf(ids[p]);
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < w; ++j)
                                      gp[i * w + j] += g[i * n + off + j];
                          }
                          off += w;
                      }
                  });
}

Tensor select_rows(const Tensor& table, const std::vector<int>& idx) {
    const std::size_t n = table.cols();
    for (int i : idx) {
        if (i < 0 || static_cast<std::size_t>(i) >= table.rows()) {
            throw shape_error("select_rows: index " + std::to_string(i) + " out of range for " +
                              table.shape_str());
        }
    }
    std::vector<double> vals(idx.size() * n);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j)
            vals[r * n + j] = table.at(static_cast<std::size_t>(idx[r]), j);
    Tensor out(idx.size(), n, std::move(vals));
    Tape* tp = result_tape({&table});
    const int tid = (table.tracked() ? table.node() : -1);
    return finish(std::move(out), tp, {tid}, [tid, idx, n](Tape& t, int self) {
        if (tid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& gt = t.grad_buf(tid);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < n; ++j)
                gt[static_cast<std::size_t>(idx[r]) * n + j] += g[r * n + j];
    });
}

Tensor gather_rowwise(const Tensor& a, const std::vector<int>& col_idx) {
    if (col_idx.size() != a.rows()) {
        throw shape_error("gather_rowwise: need one column index per row of " + a.shape_str());
    }
    const std::size_t n = a.cols();
    std::vector<double> vals(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const int c = col_idx[i];
        if (c < 0 || static_cast<std::size_t>(c) >= n) {
            throw shape_error("gather_rowwise: column " + std::to_string(c) + " out of range for " +
                              a.shape_str());
        }
        vals[i] = a.at(i, static_cast<std::size_t>(c));
    }
    Tensor out(a.rows(), 1, std::move(vals));
    Tape* tp = result_tape({&a});
    const int aid = (a.tracked() ? a.node() : -1);
    return finish(std::move(out), tp, {aid}, [aid, col_idx, n](Tape& t, int self) {
        if (aid < 0) return;
        const auto& g = t.grad_buf(self);
        auto& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < col_idx.size(); ++i)
            ga[i * n + static_cast<std::size_t>(col_idx[i])] += g[i];
    });
}

Tensor causal_mask(std::size_t n) {
    Tensor m(n, n);
    auto& d = const_cast<std::vector<double>&>(m.data());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) d[i * n + j] = 1.0;
    return m;
}

}  // namespace mgk
