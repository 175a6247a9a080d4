#include "glognn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "glognn/errors.hpp"

namespace glognn::ad {

namespace {

void require(bool ok, std::string_view what) {
    if (!ok) throw DimensionError(std::string(what));
}

std::string shape(Var v) { return fmt::format("{}x{}", v.rows, v.cols); }

}  // namespace

const DenseMat& Gradients::of(Var leaf) const {
    const auto it = grads_.find(leaf.id);
    if (it == grads_.end()) throw DimensionError(fmt::format("no gradient for node {}", leaf.id));
    return it->second;
}

Var Tape::constant(DenseMat value) {
    const Var v{nodes_.size(), value.rows(), value.cols()};
    nodes_.push_back(Node{std::move(value), {}, false, false, false, {}});
    return v;
}

Var Tape::parameter(DenseMat value) {
    const Var v{nodes_.size(), value.rows(), value.cols()};
    nodes_.push_back(Node{std::move(value), {}, false, true, true, {}});
    return v;
}

Var Tape::record(DenseMat value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
        require(in.id < nodes_.size(), "Tape::record: input from a different tape");
        needs = needs || nodes_[in.id].requires_grad;
    }
    const Var v{nodes_.size(), value.rows(), value.cols()};
    nodes_.push_back(Node{std::move(value), {}, false, needs, false, needs ? std::move(fn) : BackwardFn{}});
    return v;
}

void Tape::accumulate(Var v, const DenseMat& g) {
    Node& node = nodes_[v.id];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
        node.grad = g;
        node.has_grad = true;
        return;
    }
    auto dst = node.grad.values();
    auto src = g.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

Gradients Tape::backward(Var loss) {
    if (consumed_) throw DimensionError("Tape::backward: tape already consumed");
    require(loss.rows == 1 && loss.cols == 1, "Tape::backward: loss must be 1x1, got " + shape(loss));
    consumed_ = true;

    accumulate(loss, DenseMat{{1.0}});
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.has_grad || !node.backward) continue;
        // The node's own buffer is no longer needed once routed upstream.
        const DenseMat g = std::move(node.grad);
        node.backward(*this, g);
    }

    Gradients out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        Node& node = nodes_[id];
        if (!node.trainable) continue;
        out.grads_.emplace(id, node.has_grad ? std::move(node.grad)
                                             : DenseMat(node.value.rows(), node.value.cols()));
    }
    return out;
}

// ---------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
    require(a.cols == b.rows, "t_matmul: " + shape(a) + " times " + shape(b));
    return t.record(glognn::matmul(t.value(a), t.value(b)), {a, b},
                    [a, b](Tape& tp, const DenseMat& g) {
                        if (tp.requires_grad(a))
                            tp.accumulate(a, glognn::matmul(g, glognn::transpose(tp.value(b))));
                        if (tp.requires_grad(b))
                            tp.accumulate(b, glognn::matmul(glognn::transpose(tp.value(a)), g));
                    });
}

Var matmul_const(Tape& t, const DenseMat& a, Var b) {
    require(a.cols() == b.rows, fmt::format("t_matmul_const: {}x{} times {}", a.rows(), a.cols(), shape(b)));
    const DenseMat* ap = &a;
    return t.record(glognn::matmul(a, t.value(b)), {b}, [ap, b](Tape& tp, const DenseMat& g) {
        tp.accumulate(b, glognn::matmul(glognn::transpose(*ap), g));
    });
}

Var spmm_const(Tape& t, const CsrMat& s, Var d) {
    require(s.cols() == d.rows, fmt::format("t_spmm_const: {}x{} sparse times {}", s.rows(), s.cols(), shape(d)));
    const CsrMat* sp = &s;
    return t.record(glognn::spmm(s, t.value(d)), {d},
                    [sp, d](Tape& tp, const DenseMat& g) { tp.accumulate(d, spmm_transposed(*sp, g)); });
}

Var add(Tape& t, Var a, Var b) {
    require(a.rows == b.rows && a.cols == b.cols, "t_add: " + shape(a) + " vs " + shape(b));
    return t.record(glognn::add(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, const DenseMat& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    require(a.rows == b.rows && a.cols == b.cols, "t_sub: " + shape(a) + " vs " + shape(b));
    return t.record(glognn::sub(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, const DenseMat& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b)) tp.accumulate(b, glognn::scale(g, -1.0));
    });
}

Var scale_const(Tape& t, Var m, double s) {
    return t.record(glognn::scale(t.value(m), s), {m},
                    [m, s](Tape& tp, const DenseMat& g) { tp.accumulate(m, glognn::scale(g, s)); });
}

Var scale_var(Tape& t, Var scalar, Var m) {
    require(scalar.rows == 1 && scalar.cols == 1, "t_scale_var: scalar must be 1x1, got " + shape(scalar));
    const double s = t.value(scalar)(0, 0);
    return t.record(glognn::scale(t.value(m), s), {scalar, m}, [scalar, m](Tape& tp, const DenseMat& g) {
        if (tp.requires_grad(scalar)) {
            const auto mv = tp.value(m).values();
            const auto gv = g.values();
            double d = 0.0;
            for (std::size_t k = 0; k < gv.size(); ++k) d += gv[k] * mv[k];
            tp.accumulate(scalar, DenseMat{{d}});
        }
        if (tp.requires_grad(m)) tp.accumulate(m, glognn::scale(g, tp.value(scalar)(0, 0)));
    });
}

Var add_row(Tape& t, Var m, Var row) {
    require(row.rows == 1 && row.cols == m.cols, "t_add_row: " + shape(m) + " plus row " + shape(row));
    DenseMat out = t.value(m);
    const auto r = t.value(row).row(0);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] += r[j];
    }
    ensure_finite(out, "t_add_row");
    return t.record(std::move(out), {m, row}, [m, row](Tape& tp, const DenseMat& g) {
        tp.accumulate(m, g);
        if (tp.requires_grad(row)) {
            DenseMat acc(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) acc(0, j) += g(i, j);
            tp.accumulate(row, acc);
        }
    });
}

Var scale_cols(Tape& t, Var m, Var scales) {
    require(scales.rows == 1 && scales.cols == m.cols, "t_scale_cols: " + shape(m) + " by " + shape(scales));
    DenseMat out = t.value(m);
    const auto s = t.value(scales).row(0);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] *= s[j];
    }
    ensure_finite(out, "t_scale_cols");
    return t.record(std::move(out), {m, scales}, [m, scales](Tape& tp, const DenseMat& g) {
        const auto s = tp.value(scales).row(0);
        if (tp.requires_grad(m)) {
            DenseMat gm = g;
            for (std::size_t i = 0; i < gm.rows(); ++i) {
                auto r = gm.row(i);
                for (std::size_t j = 0; j < r.size(); ++j) r[j] *= s[j];
            }
            tp.accumulate(m, gm);
        }
        if (tp.requires_grad(scales)) {
            const DenseMat& mv = tp.value(m);
            DenseMat gs(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gs(0, j) += g(i, j) * mv(i, j);
            tp.accumulate(scales, gs);
        }
    });
}

Var entry(Tape& t, Var m, std::size_t r, std::size_t c) {
    require(r < m.rows && c < m.cols, fmt::format("t_entry: ({}, {}) outside {}", r, c, shape(m)));
    return t.record(DenseMat{{t.value(m)(r, c)}}, {m}, [m, r, c](Tape& tp, const DenseMat& g) {
        DenseMat gm(m.rows, m.cols);
        gm(r, c) = g(0, 0);
        tp.accumulate(m, gm);
    });
}

Var transpose(Tape& t, Var m) {
    return t.record(glognn::transpose(t.value(m)), {m},
                    [m](Tape& tp, const DenseMat& g) { tp.accumulate(m, glognn::transpose(g)); });
}

Var small_inverse(Tape& t, Var m) {
    require(m.rows == m.cols, "t_small_inverse: matrix must be square, got " + shape(m));
    DenseMat inv = glognn::small_inverse(t.value(m));
    // d(M^-1) = -M^-1 dM M^-1, so dL/dM = -M^-T G M^-T.
    DenseMat inv_t = glognn::transpose(inv);
    return t.record(std::move(inv), {m}, [m, inv_t = std::move(inv_t)](Tape& tp, const DenseMat& g) {
        tp.accumulate(m, glognn::scale(glognn::matmul(glognn::matmul(inv_t, g), inv_t), -1.0));
    });
}

Var relu(Tape& t, Var m) {
    DenseMat out = t.value(m);
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return t.record(std::move(out), {m}, [m](Tape& tp, const DenseMat& g) {
        DenseMat gm = g;
        const auto mv = tp.value(m).values();
        auto gv = gm.values();
        for (std::size_t k = 0; k < gv.size(); ++k)
            if (!(mv[k] > 0.0)) gv[k] = 0.0;
        tp.accumulate(m, gm);
    });
}

Var dropout(Tape& t, Var m, double rate, std::uint64_t seed) {
    require(rate >= 0.0 && rate < 1.0, fmt::format("t_dropout: rate {} not in [0, 1)", rate));
    if (rate == 0.0) return m;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    DenseMat mask(m.rows, m.cols);
    for (double& v : mask.values()) v = unif(rng) >= rate ? keep_scale : 0.0;
    DenseMat out = t.value(m);
    auto ov = out.values();
    const auto mk = mask.values();
    for (std::size_t k = 0; k < ov.size(); ++k) ov[k] *= mk[k];
    return t.record(std::move(out), {m}, [m, mask = std::move(mask)](Tape& tp, const DenseMat& g) {
        DenseMat gm = g;
        auto gv = gm.values();
        const auto mk = mask.values();
        for (std::size_t k = 0; k < gv.size(); ++k) gv[k] *= mk[k];
        tp.accumulate(m, gm);
    });
}

namespace {

DenseMat row_softmax(const DenseMat& m) {
    DenseMat p(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        auto o = p.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) z += (o[j] = std::exp(r[j] - mx));
        for (double& v : o) v /= z;
    }
    return p;
}

}  // namespace

Var softmax_rows(Tape& t, Var m) {
    require(m.cols > 0, "t_softmax_rows: no columns");
    DenseMat p = row_softmax(t.value(m));
    // Row-wise vector-Jacobian product: g_in = p * (g - <g, p>).
    return t.record(DenseMat(p), {m}, [m, p](Tape& tp, const DenseMat& g) {
        DenseMat gm(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
            for (std::size_t j = 0; j < p.cols(); ++j) gm(i, j) = p(i, j) * (g(i, j) - dot);
        }
        tp.accumulate(m, gm);
    });
}

Var cross_entropy_masked(Tape& t, Var logits, std::span<const int> labels,
                         std::span<const std::size_t> mask) {
    require(!mask.empty(), "t_cross_entropy_masked: empty mask");
    require(labels.size() == logits.rows, "t_cross_entropy_masked: one label per row required");
    const DenseMat& z = t.value(logits);
    const DenseMat p = row_softmax(z);
    double loss = 0.0;
    for (std::size_t i : mask) {
        require(i < z.rows(), "t_cross_entropy_masked: mask index out of range");
        const auto y = static_cast<std::size_t>(labels[i]);
        require(labels[i] >= 0 && y < z.cols(), "t_cross_entropy_masked: label out of range");
        const auto r = z.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double lse = 0.0;
        for (double v : r) lse += std::exp(v - mx);
        loss -= (r[y] - mx) - std::log(lse);
    }
    const double inv_m = 1.0 / static_cast<double>(mask.size());
    loss *= inv_m;
    if (!std::isfinite(loss)) throw NumericalError("non-finite cross-entropy loss");
    std::vector<std::size_t> rows(mask.begin(), mask.end());
    std::vector<int> labs(labels.begin(), labels.end());
    return t.record(DenseMat{{loss}}, {logits},
                    [logits, p, rows = std::move(rows), labs = std::move(labs), inv_m](Tape& tp, const DenseMat& g) {
                        DenseMat gz(p.rows(), p.cols());
                        const double s = g(0, 0) * inv_m;
                        for (std::size_t i : rows) {
                            for (std::size_t j = 0; j < p.cols(); ++j) gz(i, j) += s * p(i, j);
                            gz(i, static_cast<std::size_t>(labs[i])) -= s;
                        }
                        tp.accumulate(logits, gz);
                    });
}

Var sum(Tape& t, Var m) {
    double s = 0.0;
    for (double v : t.value(m).values()) s += v;
    return t.record(DenseMat{{s}}, {m}, [m](Tape& tp, const DenseMat& g) {
        tp.accumulate(m, DenseMat::filled(m.rows, m.cols, g(0, 0)));
    });
}

Var frob_sq(Tape& t, Var m) {
    double s = 0.0;
    for (double v : t.value(m).values()) s += v * v;
    return t.record(DenseMat{{s}}, {m}, [m](Tape& tp, const DenseMat& g) {
        tp.accumulate(m, glognn::scale(tp.value(m), 2.0 * g(0, 0)));
    });
}

}  // namespace glognn::ad
