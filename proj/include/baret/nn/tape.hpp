// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "baret/errors.hpp"

namespace baret::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Spatial gather plan for 3x3 convolution on a (channels x H*W) feature
// matrix; entry -1 means zero padding. Built once per resolution.
struct Im2colPlan {
    int height = 0;
    int width = 0;
    std::vector<int> neighbor;  // size 9*H*W, neighbor[p*9+k]

    static Im2colPlan make(int h, int w) {
        Im2colPlan plan;
        plan.height = h;
        plan.width = w;
        plan.neighbor.resize(size_t(9) * size_t(h) * size_t(w));
        int p = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x, ++p) {
                int k = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx, ++k) {
                        const int ny = y + dy, nx = x + dx;
                        plan.neighbor[size_t(p) * 9 + size_t(k)] =
                            (ny < 0 || ny >= h || nx < 0 || nx >= w) ? -1 : ny * w + nx;
                    }
                }
            }
        }
        return plan;
    }
};

// Reverse-mode tape over dense matrices. Nodes are appended in topological
// order; backward() sweeps in reverse creation order. Gradients are only
// materialized along paths that reach a grad-requiring leaf.
template <class S>
class Tape {
public:
    Tape() { nodes_.reserve(128); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int leaf(Mat<S> value, bool needs_grad = false) {
        nodes_.push_back(Node{std::move(value), {}, nullptr, needs_grad});
        return int(nodes_.size()) - 1;
    }
    int constant(Mat<S> value) { return leaf(std::move(value), false); }

    const Mat<S>& val(int id) const { return nodes_[size_t(id)].value; }
    bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

    Mat<S>& grad(int id) {
        Node& n = nodes_[size_t(id)];
        if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
            n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    // Seeds d(root)/d(root) = 1 for a scalar root.
    void backward(int root) {
        if (val(root).size() != 1) throw ParameterError("Tape::backward: root must be scalar");
        backward_from(root, Mat<S>::Constant(1, 1, S(1)));
    }

    // Seeds an arbitrary cotangent at `node` and sweeps the tape.
    void backward_from(int node, const Mat<S>& seed) {
        if (seed.rows() != val(node).rows() || seed.cols() != val(node).cols())
            throw ShapeError("Tape::backward_from: seed shape mismatch");
        grad(node) += seed;
        for (int id = node; id >= 0; --id) {
            Node& n = nodes_[size_t(id)];
            if (n.back && n.grad.size() != 0) n.back();
        }
    }

    // ---- elementwise / affine ----

    int add(int a, int b) {
        return binary(a, b, val(a) + val(b), [this](int out, int a2, int b2) {
            const Mat<S>& g = grad(out);
            if (needs_grad(a2)) grad(a2) += g;
            if (needs_grad(b2)) grad(b2) += g;
        });
    }

    int axpby(S alpha, int a, S beta, int b) {
        return binary(a, b, alpha * val(a) + beta * val(b),
                      [this, alpha, beta](int out, int a2, int b2) {
                          const Mat<S>& g = grad(out);
                          if (needs_grad(a2)) grad(a2) += alpha * g;
                          if (needs_grad(b2)) grad(b2) += beta * g;
                      });
    }

    int scale(int a, S k) {
        return unary(a, k * val(a), [this, k](int out, int a2) {
            if (needs_grad(a2)) grad(a2) += k * grad(out);
        });
    }

    int silu(int a) {
        const Mat<S>& x = val(a);
        Mat<S> sig = (S(1) / (S(1) + (-x.array()).exp())).matrix();
        Mat<S> y = x.cwiseProduct(sig);
        int out = leaf(std::move(y), needs_grad(a));
        if (needs_grad(a)) {
            nodes_[size_t(out)].back = [this, out, a, sig = std::move(sig)]() {
                const Mat<S>& x2 = val(a);
                Mat<S> d = sig.array() * (S(1) + x2.array() * (S(1) - sig.array()));
                grad(a) += grad(out).cwiseProduct(d);
            };
        }
        return out;
    }

    // A + column * ones^T, broadcasting a (R x 1) column over all columns.
    int add_col_broadcast(int a, int col) {
        if (val(col).cols() != 1 || val(col).rows() != val(a).rows())
            throw ShapeError("add_col_broadcast: column shape mismatch");
        Mat<S> y = val(a).colwise() + val(col).col(0);
        return binary(a, col, std::move(y), [this](int out, int a2, int c2) {
            const Mat<S>& g = grad(out);
            if (needs_grad(a2)) grad(a2) += g;
            if (needs_grad(c2)) grad(c2) += g.rowwise().sum();
        });
    }

    // ---- products ----

    int matmul(int a, int b) {  // A * B
        check_inner(val(a).cols(), val(b).rows(), "matmul");
        return binary(a, b, val(a) * val(b), [this](int out, int a2, int b2) {
            const Mat<S>& g = grad(out);
            if (needs_grad(a2)) grad(a2).noalias() += g * val(b2).transpose();
            if (needs_grad(b2)) grad(b2).noalias() += val(a2).transpose() * g;
        });
    }

    int matmul_tn(int a, int b) {  // A^T * B
        check_inner(val(a).rows(), val(b).rows(), "matmul_tn");
        return binary(a, b, val(a).transpose() * val(b), [this](int out, int a2, int b2) {
            const Mat<S>& g = grad(out);
            if (needs_grad(a2)) grad(a2).noalias() += val(b2) * g.transpose();
            if (needs_grad(b2)) grad(b2).noalias() += val(a2) * g;
        });
    }

    int matmul_nt(int a, int b) {  // A * B^T
        check_inner(val(a).cols(), val(b).cols(), "matmul_nt");
        return binary(a, b, val(a) * val(b).transpose(), [this](int out, int a2, int b2) {
            const Mat<S>& g = grad(out);
            if (needs_grad(a2)) grad(a2).noalias() += g * val(b2);
            if (needs_grad(b2)) grad(b2).noalias() += g.transpose() * val(a2);
        });
    }

    // ---- structure ----

    int slice_rows(int a, int r0, int nrows) {
        Mat<S> y = val(a).middleRows(r0, nrows);
        return unary(a, std::move(y), [this, r0, nrows](int out, int a2) {
            if (needs_grad(a2)) grad(a2).middleRows(r0, nrows) += grad(out);
        });
    }

    int concat_rows(int a, int b) {
        if (val(a).cols() != val(b).cols()) throw ShapeError("concat_rows: column mismatch");
        Mat<S> y(val(a).rows() + val(b).rows(), val(a).cols());
        y.topRows(val(a).rows()) = val(a);
        y.bottomRows(val(b).rows()) = val(b);
        const int ra = int(val(a).rows());
        return binary(a, b, std::move(y), [this, ra](int out, int a2, int b2) {
            const Mat<S>& g = grad(out);
            if (needs_grad(a2)) grad(a2) += g.topRows(ra);
            if (needs_grad(b2)) grad(b2) += g.bottomRows(g.rows() - ra);
        });
    }

    // Row gather (embedding lookup); backward scatter-adds.
    int gather_rows(int table, const std::vector<int>& idx) {
        const Mat<S>& t = val(table);
        Mat<S> y(idx.size(), t.cols());
        for (size_t i = 0; i < idx.size(); ++i) y.row(long(i)) = t.row(idx[i]);
        return unary(table, std::move(y), [this, idx](int out, int t2) {
            if (!needs_grad(t2)) return;
            const Mat<S>& g = grad(out);
            Mat<S>& gt = grad(t2);
            for (size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(long(i));
        });
    }

    // ---- normalization / attention ----

    // Layer normalization over each column (the channel axis of feature
    // matrices), with learnable per-row gain and bias.
    int norm_cols(int a, int gamma, int beta, S eps = S(1e-5)) {
        const Mat<S>& x = val(a);
        const long rows = x.rows(), cols = x.cols();
        if (val(gamma).rows() != rows || val(gamma).cols() != 1)
            throw ShapeError("norm_cols: gamma shape");
        if (val(beta).rows() != rows || val(beta).cols() != 1)
            throw ShapeError("norm_cols: beta shape");

        Mat<S> xhat(rows, cols);
        Eigen::Array<S, 1, Eigen::Dynamic> inv_sigma(cols);
        for (long j = 0; j < cols; ++j) {
            const S mu = x.col(j).mean();
            const S var = (x.col(j).array() - mu).square().mean();
            const S is = S(1) / std::sqrt(var + eps);
            inv_sigma(j) = is;
            xhat.col(j) = (x.col(j).array() - mu) * is;
        }
        Mat<S> y = (xhat.array().colwise() * val(gamma).col(0).array()).colwise() +
                   val(beta).col(0).array();

        int out = leaf(std::move(y), needs_grad(a) || needs_grad(gamma) || needs_grad(beta));
        if (nodes_[size_t(out)].needs_grad) {
            nodes_[size_t(out)].back = [this, out, a, gamma, beta, xhat = std::move(xhat),
                                        inv_sigma = std::move(inv_sigma)]() {
                const Mat<S>& g = grad(out);
                if (needs_grad(beta)) grad(beta) += g.rowwise().sum();
                if (needs_grad(gamma)) grad(gamma) += g.cwiseProduct(xhat).rowwise().sum();
                if (needs_grad(a)) {
                    Mat<S>& ga = grad(a);
                    const auto gm = val(gamma).col(0).array();
                    for (long j = 0; j < g.cols(); ++j) {
                        Eigen::Array<S, Eigen::Dynamic, 1> gj = g.col(j).array() * gm;
                        const S m1 = gj.mean();
                        const S m2 = (gj * xhat.col(j).array()).mean();
                        ga.col(j).array() +=
                            (gj - m1 - xhat.col(j).array() * m2) * inv_sigma(j);
                    }
                }
            };
        }
        return out;
    }

    int softmax_rows(int a) {
        const Mat<S>& x = val(a);
        Mat<S> y(x.rows(), x.cols());
        for (long i = 0; i < x.rows(); ++i) {
            const S mx = x.row(i).maxCoeff();
            y.row(i) = (x.row(i).array() - mx).exp();
            y.row(i) /= y.row(i).sum();
        }
        return unary(a, std::move(y), [this](int out, int a2) {
            if (!needs_grad(a2)) return;
            const Mat<S>& y2 = val(out);
            const Mat<S>& g = grad(out);
            Mat<S>& ga = grad(a2);
            for (long i = 0; i < y2.rows(); ++i) {
                const S dot = (g.row(i).array() * y2.row(i).array()).sum();
                ga.row(i).array() += (g.row(i).array() - dot) * y2.row(i).array();
            }
        });
    }

    // ---- spatial resampling ----

    int avg_pool2x2(int a, int h, int w) {
        const Mat<S>& x = val(a);
        if (x.cols() != h * w) throw ShapeError("avg_pool2x2: spatial size mismatch");
        const int oh = h / 2, ow = w / 2;
        Mat<S> y = Mat<S>::Zero(x.rows(), oh * ow);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const int o = oy * ow + ox;
                const int i0 = (2 * oy) * w + 2 * ox;
                y.col(o) = S(0.25) * (x.col(i0) + x.col(i0 + 1) + x.col(i0 + w) + x.col(i0 + w + 1));
            }
        return unary(a, std::move(y), [this, h, w, oh, ow](int out, int a2) {
            if (!needs_grad(a2)) return;
            const Mat<S>& g = grad(out);
            Mat<S>& ga = grad(a2);
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const int o = oy * ow + ox;
                    const int i0 = (2 * oy) * w + 2 * ox;
                    const auto gcol = S(0.25) * g.col(o);
                    ga.col(i0) += gcol;
                    ga.col(i0 + 1) += gcol;
                    ga.col(i0 + w) += gcol;
                    ga.col(i0 + w + 1) += gcol;
                }
        });
    }

    int upsample2x(int a, int h, int w) {
        const Mat<S>& x = val(a);
        if (x.cols() != h * w) throw ShapeError("upsample2x: spatial size mismatch");
        const int oh = h * 2, ow = w * 2;
        Mat<S> y(x.rows(), oh * ow);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                y.col(oy * ow + ox) = x.col((oy / 2) * w + (ox / 2));
        return unary(a, std::move(y), [this, h, w, oh, ow](int out, int a2) {
            if (!needs_grad(a2)) return;
            const Mat<S>& g = grad(out);
            Mat<S>& ga = grad(a2);
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    ga.col((oy / 2) * w + (ox / 2)) += g.col(oy * ow + ox);
        });
    }

    // im2col for 3x3 kernels: (C x P) -> (9C x P), zero padded.
    int im2col3x3(int a, const Im2colPlan& plan) {
        const Mat<S>& x = val(a);
        const long c = x.rows();
        const long p = x.cols();
        if (p != long(plan.height) * long(plan.width))
            throw ShapeError("im2col3x3: spatial size mismatch");
        Mat<S> y = Mat<S>::Zero(9 * c, p);
        for (long j = 0; j < p; ++j)
            for (int k = 0; k < 9; ++k) {
                const int src = plan.neighbor[size_t(j) * 9 + size_t(k)];
                if (src >= 0) y.col(j).segment(k * c, c) = x.col(src);
            }
        return unary(a, std::move(y), [this, &plan, c](int out, int a2) {
            if (!needs_grad(a2)) return;
            const Mat<S>& g = grad(out);
            Mat<S>& ga = grad(a2);
            for (long j = 0; j < g.cols(); ++j)
                for (int k = 0; k < 9; ++k) {
                    const int src = plan.neighbor[size_t(j) * 9 + size_t(k)];
                    if (src >= 0) ga.col(src) += g.col(j).segment(k * c, c);
                }
        });
    }

    // ---- reductions ----

    // mean((A - B)^2) as a 1x1 node.
    int mse(int a, int b) {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw ShapeError("mse: shape mismatch");
        const S n = S(val(a).size());
        Mat<S> y(1, 1);
        y(0, 0) = (val(a) - val(b)).squaredNorm() / n;
        return binary(a, b, std::move(y), [this, n](int out, int a2, int b2) {
            const S g = grad(out)(0, 0);
            Mat<S> d = (S(2) / n) * g * (val(a2) - val(b2));
            if (needs_grad(a2)) grad(a2) += d;
            if (needs_grad(b2)) grad(b2) -= d;
        });
    }

    // mean(A .* W) as a 1x1 node (linear functional).
    int dot_mean(int a, int weights) {
        if (val(a).rows() != val(weights).rows() || val(a).cols() != val(weights).cols())
            throw ShapeError("dot_mean: shape mismatch");
        const S n = S(val(a).size());
        Mat<S> y(1, 1);
        y(0, 0) = val(a).cwiseProduct(val(weights)).sum() / n;
        return binary(a, weights, std::move(y), [this, n](int out, int a2, int w2) {
            const S g = grad(out)(0, 0);
            if (needs_grad(a2)) grad(a2) += (g / n) * val(w2);
            if (needs_grad(w2)) grad(w2) += (g / n) * val(a2);
        });
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat<S> value;
        Mat<S> grad;
        std::function<void()> back;
        bool needs_grad = false;
    };

    static void check_inner(long a, long b, const char* where) {
        if (a != b) throw ShapeError(std::string(where) + ": inner dimension mismatch");
    }

    template <class F>
    int unary(int a, Mat<S> value, F&& fn) {
        int out = leaf(std::move(value), needs_grad(a));
        if (nodes_[size_t(out)].needs_grad)
            nodes_[size_t(out)].back = [fn = std::forward<F>(fn), out, a]() mutable { fn(out, a); };
        return out;
    }

    template <class F>
    int binary(int a, int b, Mat<S> value, F&& fn) {
        int out = leaf(std::move(value), needs_grad(a) || needs_grad(b));
        if (nodes_[size_t(out)].needs_grad)
            nodes_[size_t(out)].back = [fn = std::forward<F>(fn), out, a, b]() mutable {
                fn(out, a, b);
            };
        return out;
    }

    std::vector<Node> nodes_;
};

}  // namespace baret::nn
