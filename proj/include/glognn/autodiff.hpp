#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "glognn/linalg.hpp"

namespace glognn::ad {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

class Tape;

/// Gradients of the loss with respect to every trainable leaf.
class Gradients {
public:
    const DenseMat& of(Var leaf) const;
    bool contains(Var leaf) const { return grads_.count(leaf.id) != 0; }

private:
    friend class Tape;
    std::unordered_map<std::size_t, DenseMat> grads_;
};

/// Reverse-mode record. Nodes are appended in evaluation order, so every
/// node's inputs have smaller ids. A tape supports exactly one backward pass.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const DenseMat& grad_out)>;

    Var constant(DenseMat value);
    Var parameter(DenseMat value);

    const DenseMat& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Appends an op node. `fn` receives the cotangent of the new node and
    /// must route it to the inputs through accumulate().
    Var record(DenseMat value, std::initializer_list<Var> inputs, BackwardFn fn);

    /// Adds `g` into the gradient buffer of `v`; no-op for constants.
    void accumulate(Var v, const DenseMat& g);

    /// Single reverse sweep from a 1x1 loss.
    Gradients backward(Var loss);

private:
    struct Node {
        DenseMat value;
        DenseMat grad;
        bool has_grad = false;
        bool requires_grad = false;
        bool trainable = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Op vocabulary. Every op validates shapes when recorded.

Var matmul(Tape& t, Var a, Var b);
/// a * b for a constant left operand captured by reference (it must
/// outlive the tape). Avoids copying large fixed inputs onto the tape.
Var matmul_const(Tape& t, const DenseMat& a, Var b);
/// s is captured by reference and must outlive the tape.
Var spmm_const(Tape& t, const CsrMat& s, Var d);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale_const(Tape& t, Var m, double s);
/// 1x1 scalar times matrix.
Var scale_var(Tape& t, Var scalar, Var m);
/// Broadcasts a 1 x c row onto every row of m.
Var add_row(Tape& t, Var m, Var row);
/// Multiplies column j of m by scales(0, j); scales is 1 x c.
Var scale_cols(Tape& t, Var m, Var scales);
/// Entry (r, c) of m as a 1x1 Var.
Var entry(Tape& t, Var m, std::size_t r, std::size_t c);
Var transpose(Tape& t, Var m);
Var small_inverse(Tape& t, Var m);
Var relu(Tape& t, Var m);
/// Inverted dropout: survivors scaled by 1 / (1 - rate). rate = 0 is identity.
Var dropout(Tape& t, Var m, double rate, std::uint64_t seed);
Var softmax_rows(Tape& t, Var m);
/// Mean over `mask` rows of -log softmax(logits)[label].
Var cross_entropy_masked(Tape& t, Var logits, std::span<const int> labels,
                         std::span<const std::size_t> mask);
/// Sum of all entries, 1x1.
Var sum(Tape& t, Var m);
/// Squared Frobenius norm, 1x1.
Var frob_sq(Tape& t, Var m);

}  // namespace glognn::ad
