// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "baret/nn/tape.hpp"
#include "baret/rng.hpp"

using namespace baret;
using nn::Mat;
using nn::Tape;

namespace {

Mat<double> random_mat(Rng& rng, long r, long c, double scale = 1.0) {
    Mat<double> m(r, c);
    for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
    return m;
}

// Central-difference gradient check for a scalar graph over a set of
// leaves. Builder must construct the same graph each call.
using Builder = std::function<int(Tape<double>&, const std::vector<int>& leaves)>;

void gradcheck(const std::vector<Mat<double>>& inputs, const Builder& build, double tol = 1e-7,
               double step = 1e-6) {
    // Analytic pass.
    Tape<double> tape;
    std::vector<int> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m, true));
    const int root = build(tape, leaves);
    REQUIRE(tape.val(root).size() == 1);
    tape.backward(root);

    for (size_t li = 0; li < inputs.size(); ++li) {
        const Mat<double> analytic = tape.grad(leaves[li]);
        for (long i = 0; i < inputs[li].size(); ++i) {
            auto eval = [&](double delta) {
                Tape<double> t2;
                std::vector<int> l2;
                for (size_t k = 0; k < inputs.size(); ++k) {
                    Mat<double> m = inputs[k];
                    if (k == li) m.data()[i] += delta;
                    l2.push_back(t2.leaf(m, false));
                }
                return t2.val(build(t2, l2))(0, 0);
            };
            const double fd = (eval(step) - eval(-step)) / (2.0 * step);
            const double a = analytic.data()[i];
            const double scale = std::max({std::abs(a), std::abs(fd), 1.0});
            INFO("leaf " << li << " entry " << i << " analytic " << a << " fd " << fd);
            REQUIRE(std::abs(a - fd) / scale <= tol);
        }
    }
}

}  // namespace

TEST_CASE("tape matmul family gradients") {
    Rng rng(21);
    const auto a = random_mat(rng, 3, 4);
    const auto b = random_mat(rng, 4, 5);
    const auto w = random_mat(rng, 3, 5);
    gradcheck({a, b, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.matmul(l[0], l[1]), l[2]);
    });

    const auto at = random_mat(rng, 4, 3);
    gradcheck({at, b, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.matmul_tn(l[0], l[1]), l[2]);
    });

    const auto bt = random_mat(rng, 5, 4);
    gradcheck({a, bt, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.matmul_nt(l[0], l[1]), l[2]);
    });
}

TEST_CASE("tape elementwise and broadcast gradients") {
    Rng rng(22);
    const auto a = random_mat(rng, 3, 6);
    const auto b = random_mat(rng, 3, 6);
    const auto col = random_mat(rng, 3, 1);
    const auto w = random_mat(rng, 3, 6);

    gradcheck({a, b, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.axpby(0.7, l[0], -1.3, l[1]), l[2]);
    });
    gradcheck({a, col, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.add_col_broadcast(l[0], l[1]), l[2]);
    });
    gradcheck({a, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.silu(t.scale(l[0], 1.7)), l[1]);
    });
    gradcheck({a, b}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.mse(l[0], l[1]);
    });
}

TEST_CASE("tape structural op gradients") {
    Rng rng(23);
    const auto a = random_mat(rng, 6, 5);
    const auto b = random_mat(rng, 2, 5);
    const auto w3 = random_mat(rng, 3, 5);
    const auto w8 = random_mat(rng, 8, 5);

    gradcheck({a, w3}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.slice_rows(l[0], 2, 3), l[1]);
    });
    gradcheck({a, b, w8}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.concat_rows(l[0], l[1]), l[2]);
    });

    const auto table = random_mat(rng, 7, 4);
    const auto wg = random_mat(rng, 3, 4);
    gradcheck({table, wg}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.gather_rows(l[0], {1, 5, 1}), l[1]);
    });
}

TEST_CASE("tape softmax and normalization gradients") {
    Rng rng(24);
    const auto a = random_mat(rng, 4, 6);
    const auto w = random_mat(rng, 4, 6);
    gradcheck({a, w}, [](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.softmax_rows(l[0]), l[1]);
    });

    const auto gamma = random_mat(rng, 4, 1, 0.5);
    const auto beta = random_mat(rng, 4, 1, 0.5);
    gradcheck(
        {a, gamma, beta, w},
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.dot_mean(t.norm_cols(l[0], l[1], l[2]), l[3]);
        },
        1e-6);
}

TEST_CASE("tape softmax rows are stochastic") {
    Rng rng(25);
    Tape<double> t;
    const int x = t.leaf(random_mat(rng, 8, 9), false);
    const int y = t.softmax_rows(x);
    const auto& v = t.val(y);
    for (long i = 0; i < v.rows(); ++i) {
        REQUIRE(v.row(i).sum() == Catch::Approx(1.0).epsilon(1e-12));
        REQUIRE(v.row(i).minCoeff() >= 0.0);
    }
}

TEST_CASE("tape spatial op gradients") {
    Rng rng(26);
    const int h = 4, w = 4;
    const auto a = random_mat(rng, 3, h * w);
    const auto wpool = random_mat(rng, 3, (h / 2) * (w / 2));
    const auto wup = random_mat(rng, 3, 4 * h * w);

    gradcheck({a, wpool}, [&](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.avg_pool2x2(l[0], h, w), l[1]);
    });
    gradcheck({a, wup}, [&](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.upsample2x(l[0], h, w), l[1]);
    });

    static const nn::Im2colPlan plan = nn::Im2colPlan::make(h, w);
    const auto wim = random_mat(rng, 27, h * w);
    gradcheck({a, wim}, [&](Tape<double>& t, const std::vector<int>& l) {
        return t.dot_mean(t.im2col3x3(l[0], plan), l[1]);
    });
}

TEST_CASE("tape composite graph gradient") {
    // Small attention-like pattern: softmax((Wq x)^T (Wk x) / s) applied to
    // values, reduced to a scalar.
    Rng rng(27);
    const auto x = random_mat(rng, 4, 6);
    const auto wq = random_mat(rng, 4, 4);
    const auto wk = random_mat(rng, 4, 4);
    const auto wv = random_mat(rng, 4, 4);
    const auto wout = random_mat(rng, 4, 6);
    gradcheck(
        {x, wq, wk, wv, wout},
        [](Tape<double>& t, const std::vector<int>& l) {
            const int q = t.matmul(l[1], l[0]);
            const int k = t.matmul(l[2], l[0]);
            const int v = t.matmul(l[3], l[0]);
            const int probs = t.softmax_rows(t.scale(t.matmul_tn(q, k), 0.5));
            const int out = t.matmul_nt(v, probs);
            return t.dot_mean(out, l[4]);
        },
        1e-6);
}
