#include <doctest.h>

#include <cmath>
#include <functional>

#include "glognn/autodiff.hpp"
#include "glognn/errors.hpp"
#include "helpers.hpp"

using namespace glognn;
using testutil::random_mat;

namespace {

/// Central differences of f at x, one coordinate at a time.
DenseMat numeric_grad(const std::function<double(const DenseMat&)>& f, DenseMat x, double eps = 1e-6) {
    DenseMat g(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.values().size(); ++k) {
        const double saved = x.values()[k];
        x.values()[k] = saved + eps;
        const double fp = f(x);
        x.values()[k] = saved - eps;
        const double fm = f(x);
        x.values()[k] = saved;
        g.values()[k] = (fp - fm) / (2 * eps);
    }
    return g;
}

double rel_err(const DenseMat& a, const DenseMat& b) {
    return max_abs_diff(a, b) / std::max(1.0, max_abs(b));
}

}  // namespace

TEST_CASE("product rule on a 2x2 matmul") {
    ad::Tape t;
    const DenseMat av{{1, 2}, {3, 4}}, bv{{5, 6}, {7, 8}};
    const ad::Var a = t.parameter(av), b = t.parameter(bv);
    const ad::Var loss = ad::sum(t, ad::matmul(t, a, b));
    const ad::Gradients g = t.backward(loss);
    // d sum(AB)/dA = 1 B^T, d/dB = A^T 1.
    const DenseMat ones{{1, 1}, {1, 1}};
    CHECK(g.of(a) == glognn::matmul(ones, glognn::transpose(bv)));
    CHECK(g.of(b) == glognn::matmul(glognn::transpose(av), ones));
}

TEST_CASE("softmax of equal logits is uniform") {
    ad::Tape t;
    const ad::Var x = t.constant(DenseMat{{0, 0}});
    CHECK(t.value(ad::softmax_rows(t, x)) == DenseMat{{0.5, 0.5}});
}

TEST_CASE("gradient of the squared Frobenius norm") {
    ad::Tape t;
    const ad::Var x = t.parameter(DenseMat::identity(2));
    const ad::Gradients g = t.backward(ad::frob_sq(t, x));
    CHECK(g.of(x) == scale(DenseMat::identity(2), 2.0));
}

TEST_CASE("a leaf that does not reach the loss has zero gradient") {
    ad::Tape t;
    const ad::Var x = t.parameter(random_mat(2, 3, 1));
    const ad::Var unused = t.parameter(random_mat(4, 1, 2));
    const ad::Gradients g = t.backward(ad::sum(t, x));
    CHECK(g.of(unused) == DenseMat(4, 1));
    CHECK(g.of(x) == DenseMat(2, 3, std::vector<double>(6, 1.0)));
}

TEST_CASE("backward is single use and needs a scalar") {
    ad::Tape t;
    const ad::Var x = t.parameter(random_mat(2, 2, 3));
    CHECK_THROWS_AS(t.backward(x), DimensionError);
    const ad::Var loss = ad::sum(t, x);
    t.backward(loss);
    CHECK_THROWS(t.backward(loss));
}

TEST_CASE("ops validate shapes when recorded") {
    ad::Tape t;
    const ad::Var a = t.parameter(DenseMat(2, 3)), b = t.parameter(DenseMat(2, 3));
    CHECK_THROWS_AS(ad::matmul(t, a, b), DimensionError);
    CHECK_THROWS_AS(ad::add(t, a, t.constant(DenseMat(3, 2))), DimensionError);
    CHECK_THROWS_AS(ad::add_row(t, a, t.constant(DenseMat(1, 2))), DimensionError);
}

TEST_CASE("two-layer perceptron gradients match central differences") {
    const DenseMat x = random_mat(6, 4, 10);
    const std::vector<int> labels{0, 1, 2, 1, 0, 2};
    const std::vector<std::size_t> mask{0, 1, 3, 5};
    DenseMat w1 = random_mat(4, 5, 11, 0.5), b1 = random_mat(1, 5, 12, 0.1);
    DenseMat w2 = random_mat(5, 3, 13, 0.5), b2 = random_mat(1, 3, 14, 0.1);

    auto build = [&](ad::Tape& t, ad::Var vw1, ad::Var vb1, ad::Var vw2, ad::Var vb2) {
        const ad::Var h = ad::relu(t, ad::add_row(t, ad::matmul_const(t, x, vw1), vb1));
        const ad::Var logits = ad::add_row(t, ad::matmul(t, h, vw2), vb2);
        return ad::cross_entropy_masked(t, logits, labels, mask);
    };

    ad::Tape t;
    const ad::Var vw1 = t.parameter(w1), vb1 = t.parameter(b1), vw2 = t.parameter(w2), vb2 = t.parameter(b2);
    const ad::Gradients g = t.backward(build(t, vw1, vb1, vw2, vb2));

    auto loss_with = [&](int which) {
        return [&, which](const DenseMat& v) {
            ad::Tape s;
            DenseMat m[4] = {w1, b1, w2, b2};
            m[which] = v;
            return s.value(build(s, s.constant(m[0]), s.constant(m[1]), s.constant(m[2]), s.constant(m[3])))(0, 0);
        };
    };
    CHECK(rel_err(g.of(vw1), numeric_grad(loss_with(0), w1)) <= 1e-6);
    CHECK(rel_err(g.of(vb1), numeric_grad(loss_with(1), b1)) <= 1e-6);
    CHECK(rel_err(g.of(vw2), numeric_grad(loss_with(2), w2)) <= 1e-6);
    CHECK(rel_err(g.of(vb2), numeric_grad(loss_with(3), b2)) <= 1e-6);
}

TEST_CASE("small_inverse gradient matches central differences") {
    const DenseMat r = random_mat(4, 4, 20);
    DenseMat m = glognn::matmul(r, glognn::transpose(r));
    for (std::size_t i = 0; i < 4; ++i) m(i, i) += 2.0;
    const DenseMat w = random_mat(4, 4, 21);

    auto f = [&](ad::Tape& t, ad::Var v) {
        return ad::sum(t, ad::matmul(t, ad::small_inverse(t, v), t.constant(w)));
    };
    ad::Tape t;
    const ad::Var v = t.parameter(m);
    const ad::Gradients g = t.backward(f(t, v));
    const DenseMat fd = numeric_grad(
        [&](const DenseMat& x) {
            ad::Tape s;
            return s.value(f(s, s.constant(x)))(0, 0);
        },
        m);
    CHECK(rel_err(g.of(v), fd) <= 1e-6);
}

TEST_CASE("elementwise and structural ops match central differences") {
    const DenseMat a0 = random_mat(3, 4, 30), s0 = random_mat(1, 4, 31);
    const DenseMat k0{{0.7}};
    auto f = [&](ad::Tape& t, ad::Var a, ad::Var s, ad::Var k) {
        ad::Var m = ad::scale_cols(t, a, s);
        m = ad::scale_var(t, k, ad::sub(t, m, ad::scale_const(t, a, 0.3)));
        m = ad::matmul(t, ad::transpose(t, m), m);
        const ad::Var p = ad::softmax_rows(t, m);
        return ad::add(t, ad::frob_sq(t, p), ad::entry(t, m, 1, 2));
    };
    ad::Tape t;
    const ad::Var a = t.parameter(a0), s = t.parameter(s0), k = t.parameter(k0);
    const ad::Gradients g = t.backward(f(t, a, s, k));
    auto at = [&](int which) {
        return [&, which](const DenseMat& x) {
            ad::Tape u;
            const ad::Var va = u.constant(which == 0 ? x : a0);
            const ad::Var vs = u.constant(which == 1 ? x : s0);
            const ad::Var vk = u.constant(which == 2 ? x : k0);
            return u.value(f(u, va, vs, vk))(0, 0);
        };
    };
    CHECK(rel_err(g.of(a), numeric_grad(at(0), a0)) <= 1e-6);
    CHECK(rel_err(g.of(s), numeric_grad(at(1), s0)) <= 1e-6);
    CHECK(rel_err(g.of(k), numeric_grad(at(2), k0)) <= 1e-6);
}

TEST_CASE("spmm_const gradient is the transposed product") {
    const CsrMat sp = CsrMat::from_triplets(3, 3, {{0, 1, 2.0}, {1, 0, -1.0}, {2, 2, 0.5}});
    const DenseMat d0 = random_mat(3, 2, 40);
    ad::Tape t;
    const ad::Var d = t.parameter(d0);
    const ad::Gradients g = t.backward(ad::sum(t, ad::spmm_const(t, sp, d)));
    const DenseMat ones(3, 2, std::vector<double>(6, 1.0));
    CHECK(max_abs_diff(g.of(d), glognn::matmul(glognn::transpose(sp.to_dense()), ones)) <= 1e-15);
}

TEST_CASE("dropout is deterministic and unbiased") {
    const DenseMat x(100, 100, std::vector<double>(10000, 1.0));
    ad::Tape t;
    const ad::Var v = t.constant(x);
    const DenseMat a = t.value(ad::dropout(t, v, 0.5, 7));
    const DenseMat b = t.value(ad::dropout(t, v, 0.5, 7));
    const DenseMat c = t.value(ad::dropout(t, v, 0.5, 8));
    CHECK(a == b);
    CHECK(!(a == c));
    double kept = 0.0, mean = 0.0;
    for (double e : a.values()) {
        CHECK((e == 0.0 || e == 2.0));
        kept += e != 0.0;
        mean += e;
    }
    // Binomial(1e4, 0.5): sd of the kept fraction is 0.005.
    CHECK(std::abs(kept / 1e4 - 0.5) <= 0.02);
    CHECK(std::abs(mean / 1e4 - 1.0) <= 0.04);
    CHECK(t.value(ad::dropout(t, v, 0.0, 9)) == x);
}
