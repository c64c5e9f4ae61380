#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfmort/error.hpp"
#include "cfmort/nn/matrix.hpp"
#include "cfmort/nn/params.hpp"

namespace cfmort::nn {

/// Handle to a node on a Graph tape.
struct Var {
    std::size_t id = 0;
};

/**
 * Reverse-mode tape. Build a loss from constants and parameters, then call
 * backward(); parameter gradients are read back with param_grads().
 *
 * Batches are rows: a batch of B vectors of width n is a B x n matrix, and
 * linear maps are x * W with W stored fan_in x fan_out.
 */
class Graph {
public:
    explicit Graph(const ParamSet* params = nullptr) : params_(params) {}

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const { return nodes_[v.id].value[0]; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Matrix m) { return push(std::move(m), {}); }

    /// Leaf bound to a named parameter; repeated lookups share one node.
    Var param(const std::string& name) {
        if (!params_) fail(ErrorKind::config, "graph has no parameter set");
        const std::size_t index = params_->index_of(name);
        if (const auto it = param_nodes_.find(index); it != param_nodes_.end()) return it->second;
        const Var v = push(params_->entry(index).value, {});
        nodes_[v.id].param_index = static_cast<long>(index);
        param_nodes_.emplace(index, v);
        return v;
    }

    // ---- ops -------------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.cols() != B.rows()) fail(ErrorKind::shape, "matmul: " + A.shape_string() + " * " + B.shape_string());
        Matrix out(A.rows(), B.cols());
        matmul_acc(A, B, out);
        return push(std::move(out), [a, b](Graph& g, const Matrix& dout) {
            matmul_nt_acc(dout, g.value(b), g.grad(a));
            matmul_tn_acc(g.value(a), dout, g.grad(b));
        });
    }

    Var add(Var a, Var b) {
        value(a).require_same(value(b), "add");
        Matrix out = value(a);
        out += value(b);
        return push(std::move(out), [a, b](Graph& g, const Matrix& dout) {
            g.grad(a) += dout;
            g.grad(b) += dout;
        });
    }

    Var sub(Var a, Var b) {
        value(a).require_same(value(b), "sub");
        Matrix out = value(a);
        const Matrix& B = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
        return push(std::move(out), [a, b](Graph& g, const Matrix& dout) {
            g.grad(a) += dout;
            Matrix& gb = g.grad(b);
            for (std::size_t i = 0; i < dout.size(); ++i) gb[i] -= dout[i];
        });
    }

    /// a (r x c) plus a 1 x c row broadcast over rows.
    Var add_row(Var a, Var row) {
        const Matrix& A = value(a);
        const Matrix& R = value(row);
        if (R.rows() != 1 || R.cols() != A.cols())
            fail(ErrorKind::shape, "add_row: " + A.shape_string() + " + " + R.shape_string());
        Matrix out = A;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += R[c];
        return push(std::move(out), [a, row](Graph& g, const Matrix& dout) {
            g.grad(a) += dout;
            Matrix& gr = g.grad(row);
            for (std::size_t r = 0; r < dout.rows(); ++r)
                for (std::size_t c = 0; c < dout.cols(); ++c) gr[c] += dout(r, c);
        });
    }

    Var hadamard(Var a, Var b) {
        value(a).require_same(value(b), "hadamard");
        Matrix out = value(a);
        const Matrix& B = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
        return push(std::move(out), [a, b](Graph& g, const Matrix& dout) {
            const Matrix& A = g.value(a);
            const Matrix& B = g.value(b);
            Matrix& ga = g.grad(a);
            for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += dout[i] * B[i];
            Matrix& gb = g.grad(b);
            for (std::size_t i = 0; i < dout.size(); ++i) gb[i] += dout[i] * A[i];
        });
    }

    /// alpha * a + beta, elementwise.
    Var affine(Var a, double alpha, double beta = 0.0) {
        Matrix out = value(a);
        for (auto& v : out.data()) v = alpha * v + beta;
        return push(std::move(out), [a, alpha](Graph& g, const Matrix& dout) {
            Matrix& ga = g.grad(a);
            for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += alpha * dout[i];
        });
    }

    Var scale(Var a, double s) { return affine(a, s, 0.0); }
    Var one_minus(Var a) { return affine(a, -1.0, 1.0); }

    Var sigmoid(Var a) {
        Matrix out = value(a);
        for (auto& v : out.data()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        const std::size_t id = nodes_.size();
        return push(std::move(out), [a, id](Graph& g, const Matrix& dout) {
            const Matrix& y = g.nodes_[id].value;
            Matrix& ga = g.grad(a);
            for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += dout[i] * y[i] * (1.0 - y[i]);
        });
    }

    Var tanh(Var a) {
        Matrix out = value(a);
        for (auto& v : out.data()) v = std::tanh(v);
        const std::size_t id = nodes_.size();
        return push(std::move(out), [a, id](Graph& g, const Matrix& dout) {
            const Matrix& y = g.nodes_[id].value;
            Matrix& ga = g.grad(a);
            for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += dout[i] * (1.0 - y[i] * y[i]);
        });
    }

    Var relu(Var a) {
        Matrix out = value(a);
        for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
        return push(std::move(out), [a](Graph& g, const Matrix& dout) {
            const Matrix& x = g.value(a);
            Matrix& ga = g.grad(a);
            for (std::size_t i = 0; i < dout.size(); ++i)
                if (x[i] > 0.0) ga[i] += dout[i];
        });
    }

    /// Row-wise softmax. With `causal`, entry (i, j) is masked out for j > i.
    Var softmax_rows(Var a, bool causal = false) {
        const Matrix& A = value(a);
        Matrix out(A.rows(), A.cols());
        for (std::size_t r = 0; r < A.rows(); ++r) {
            const std::size_t width = causal ? std::min(A.cols(), r + 1) : A.cols();
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < width; ++c) mx = std::max(mx, A(r, c));
            double total = 0.0;
            for (std::size_t c = 0; c < width; ++c) total += (out(r, c) = std::exp(A(r, c) - mx));
            for (std::size_t c = 0; c < width; ++c) out(r, c) /= total;
        }
        const std::size_t id = nodes_.size();
        return push(std::move(out), [a, id](Graph& g, const Matrix& dout) {
            const Matrix& y = g.nodes_[id].value;
            Matrix& ga = g.grad(a);
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < y.cols(); ++c) dot += dout(r, c) * y(r, c);
                for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (dout(r, c) - dot);
            }
        });
    }

    Var transpose(Var a) {
        return push(value(a).transpose(), [a](Graph& g, const Matrix& dout) { g.grad(a) += dout.transpose(); });
    }

    Var hconcat(const std::vector<Var>& parts) {
        if (parts.empty()) fail(ErrorKind::shape, "hconcat of nothing");
        const std::size_t rows = value(parts[0]).rows();
        std::size_t cols = 0;
        for (Var p : parts) {
            if (value(p).rows() != rows) fail(ErrorKind::shape, "hconcat: row counts differ");
            cols += value(p).cols();
        }
        Matrix out(rows, cols);
        std::size_t offset = 0;
        for (Var p : parts) {
            const Matrix& P = value(p);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < P.cols(); ++c) out(r, offset + c) = P(r, c);
            offset += P.cols();
        }
        return push(std::move(out), [parts](Graph& g, const Matrix& dout) {
            std::size_t off = 0;
            for (Var p : parts) {
                Matrix& gp = g.grad(p);
                for (std::size_t r = 0; r < gp.rows(); ++r)
                    for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += dout(r, off + c);
                off += gp.cols();
            }
        });
    }

    Var vconcat(const std::vector<Var>& parts) {
        if (parts.empty()) fail(ErrorKind::shape, "vconcat of nothing");
        const std::size_t cols = value(parts[0]).cols();
        std::vector<double> data;
        for (Var p : parts) {
            if (value(p).cols() != cols) fail(ErrorKind::shape, "vconcat: column counts differ");
            data.insert(data.end(), value(p).data().begin(), value(p).data().end());
        }
        const std::size_t rows = data.size() / std::max<std::size_t>(cols, 1);
        return push(Matrix(rows, cols, std::move(data)), [parts](Graph& g, const Matrix& dout) {
            std::size_t off = 0;
            for (Var p : parts) {
                Matrix& gp = g.grad(p);
                for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += dout[off + i];
                off += gp.size();
            }
        });
    }

    Var slice_cols(Var a, std::size_t first, std::size_t count) {
        const Matrix& A = value(a);
        if (first + count > A.cols()) fail(ErrorKind::shape, "slice_cols out of range");
        Matrix out(A.rows(), count);
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < count; ++c) out(r, c) = A(r, first + c);
        return push(std::move(out), [a, first](Graph& g, const Matrix& dout) {
            Matrix& ga = g.grad(a);
            for (std::size_t r = 0; r < dout.rows(); ++r)
                for (std::size_t c = 0; c < dout.cols(); ++c) ga(r, first + c) += dout(r, c);
        });
    }

    Var slice_rows(Var a, std::size_t first, std::size_t count) {
        const Matrix& A = value(a);
        if (first + count > A.rows()) fail(ErrorKind::shape, "slice_rows out of range");
        const auto begin = A.data().begin() + static_cast<std::ptrdiff_t>(first * A.cols());
        Matrix out(count, A.cols(), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * A.cols())));
        return push(std::move(out), [a, first](Graph& g, const Matrix& dout) {
            Matrix& ga = g.grad(a);
            const std::size_t off = first * ga.cols();
            for (std::size_t i = 0; i < dout.size(); ++i) ga[off + i] += dout[i];
        });
    }

    /// Scales row r of m (B x n) by col(r, 0), col being B x 1.
    Var mul_colwise(Var col, Var m) {
        const Matrix& C = value(col);
        const Matrix& M = value(m);
        if (C.cols() != 1 || C.rows() != M.rows())
            fail(ErrorKind::shape, "mul_colwise: " + C.shape_string() + " with " + M.shape_string());
        Matrix out = M;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= C[r];
        return push(std::move(out), [col, m](Graph& g, const Matrix& dout) {
            const Matrix& C = g.value(col);
            const Matrix& M = g.value(m);
            Matrix& gc = g.grad(col);
            Matrix& gm = g.grad(m);
            for (std::size_t r = 0; r < dout.rows(); ++r)
                for (std::size_t c = 0; c < dout.cols(); ++c) {
                    gc[r] += dout(r, c) * M(r, c);
                    gm(r, c) += dout(r, c) * C[r];
                }
        });
    }

    /// Row-wise normalization followed by a learned gain and shift (both 1 x n).
    Var layer_norm(Var a, Var gain, Var shift, double eps = 1e-5) {
        const Matrix& A = value(a);
        const std::size_t n = A.cols();
        if (value(gain).rows() != 1 || value(gain).cols() != n || !value(shift).same_shape(value(gain)))
            fail(ErrorKind::shape, "layer_norm gain/shift must be 1 x " + std::to_string(n));
        Matrix xhat(A.rows(), n), out(A.rows(), n);
        std::vector<double> inv_std(A.rows());
        for (std::size_t r = 0; r < A.rows(); ++r) {
            double mu = 0.0;
            for (std::size_t c = 0; c < n; ++c) mu += A(r, c);
            mu /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t c = 0; c < n; ++c) var += (A(r, c) - mu) * (A(r, c) - mu);
            var /= static_cast<double>(n);
            inv_std[r] = 1.0 / std::sqrt(var + eps);
            for (std::size_t c = 0; c < n; ++c) {
                xhat(r, c) = (A(r, c) - mu) * inv_std[r];
                out(r, c) = value(gain)[c] * xhat(r, c) + value(shift)[c];
            }
        }
        return push(std::move(out), [a, gain, shift, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                                        Graph& g, const Matrix& dout) {
            const std::size_t cols = xhat.cols();
            const Matrix& G = g.value(gain);
            Matrix& ga = g.grad(a);
            Matrix& gg = g.grad(gain);
            Matrix& gs = g.grad(shift);
            std::vector<double> dx(cols);
            for (std::size_t r = 0; r < xhat.rows(); ++r) {
                double sum = 0.0, dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    gg[c] += dout(r, c) * xhat(r, c);
                    gs[c] += dout(r, c);
                    dx[c] = dout(r, c) * G[c];
                    sum += dx[c];
                    dot += dx[c] * xhat(r, c);
                }
                const double nn = static_cast<double>(cols);
                for (std::size_t c = 0; c < cols; ++c)
                    ga(r, c) += inv_std[r] / nn * (nn * dx[c] - sum - xhat(r, c) * dot);
            }
        });
    }

    Var sum(Var a) {
        double s = 0.0;
        for (double v : value(a).data()) s += v;
        return push(Matrix(1, 1, s), [a](Graph& g, const Matrix& dout) {
            Matrix& ga = g.grad(a);
            for (auto& v : ga.data()) v += dout[0];
        });
    }

    /// Mean squared error against a constant target of the same shape; 1 x 1.
    Var mse(Var pred, const Matrix& target) {
        const Matrix& P = value(pred);
        P.require_same(target, "mse");
        double s = 0.0;
        for (std::size_t i = 0; i < P.size(); ++i) s += (P[i] - target[i]) * (P[i] - target[i]);
        const double n = static_cast<double>(std::max<std::size_t>(P.size(), 1));
        return push(Matrix(1, 1, s / n), [pred, target, n](Graph& g, const Matrix& dout) {
            const Matrix& P = g.value(pred);
            Matrix& gp = g.grad(pred);
            for (std::size_t i = 0; i < P.size(); ++i) gp[i] += dout[0] * 2.0 * (P[i] - target[i]) / n;
        });
    }

    // ---- backward ----------------------------------------------------------

    /// Seeds d(root)/d(root) = 1 and propagates to every node recorded before it.
    void backward(Var root) {
        if (value(root).size() != 1) fail(ErrorKind::shape, "backward needs a scalar root, got " + value(root).shape_string());
        for (auto& n : nodes_) n.grad = Matrix();
        grad(root)[0] = 1.0;
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, n.grad);
        }
    }

    /// Gradient of the last backward() root with respect to v (zeros if unreached).
    Matrix gradient(Var v) const {
        const Node& n = nodes_[v.id];
        return n.grad.size() ? n.grad : Matrix(n.value.rows(), n.value.cols());
    }

    /// Adds this graph's parameter gradients into `out` (aligned with the ParamSet).
    void accumulate_param_grads(Grads& out) const {
        for (const auto& [index, v] : param_nodes_) {
            const Matrix& gr = nodes_[v.id].grad;
            if (gr.size()) out[index] += gr;
        }
    }

    Grads param_grads() const {
        if (!params_) fail(ErrorKind::config, "graph has no parameter set");
        Grads g = zero_grads(*params_);
        accumulate_param_grads(g);
        return g;
    }

private:
    using Backward = std::function<void(Graph&, const Matrix&)>;
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        long param_index = -1;
    };

    Var push(Matrix value, Backward backward) {
        nodes_.push_back({std::move(value), Matrix(), std::move(backward)});
        return {nodes_.size() - 1};
    }

    Matrix& grad(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix(n.value.rows(), n.value.cols());
        return n.grad;
    }

    const ParamSet* params_;
    std::vector<Node> nodes_;
    std::unordered_map<std::size_t, Var> param_nodes_;
};

}  // namespace cfmort::nn
