#pragma once

#include "advmk/kernels.hpp"
#include "advmk/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace advmk::ad {

enum class Op {
    Leaf,
    Add, Sub, Mul, Div,
    Scale, AddC, ChanAffine, BcastMul,
    LRelu, Sigmoid, Tanh, LogC, Clamp, Sqrt,
    Sum, Mean, ChanMean,
    MatMulNN, MatMulNT, MatVec,
    Conv2d, AddChanBias, Resize, ConcatC,
    Crop, Embed, DiffX, DiffY, Reshape,
    SoftmaxXent, Composite,
};

template <class T>
Tensor<T> lift(const TensorD& src) {
    Tensor<T> out(src.shape);
    for (std::int64_t i = 0; i < src.size(); ++i) out[i] = T(src[i]);
    return out;
}

/// Tape-based reverse-mode autodiff over tensors. Forward values are computed
/// eagerly as nodes are built; backward(loss) sweeps the active subgraph and
/// accumulates adjoints. Multiple backward calls on one graph are allowed,
/// which lets one shared forward pass serve several losses.
///
/// The tape can also be re-run: set_leaf / set_composite_mask swap in new
/// values without touching the structure, and refresh() recomputes every
/// derived node in place. A training loop can therefore build its graphs once
/// and pay only for arithmetic on later iterations. Gradient buffers are kept
/// across backward calls for the same reason.
template <class T>
class Graph {
public:
    using NodeId = int;

    struct Node {
        Op op = Op::Leaf;
        NodeId a = -1, b = -1;
        int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
        double d0 = 0.0, d1 = 0.0;
        std::vector<double> aux;
        std::vector<std::uint8_t> mask;
        Tensor<T> val;
        Tensor<T> grad;
        bool needs_grad = false;
    };

    NodeId input(Tensor<T> v) { return leaf(std::move(v), true); }
    NodeId constant(Tensor<T> v) { return leaf(std::move(v), false); }

    const Tensor<T>& val(NodeId n) const { return nodes_[n].val; }
    const Tensor<T>& grad(NodeId n) const { return nodes_[n].grad; }
    size_t size() const { return nodes_.size(); }

    /// Replace a leaf's value; shape must match the original.
    void set_leaf(NodeId id, const Tensor<T>& v) {
        Node& n = nodes_[id];
        require(n.op == Op::Leaf, "set_leaf: not a leaf");
        require(n.val.shape == v.shape, "set_leaf: shape mismatch");
        std::copy(v.data.begin(), v.data.end(), n.val.data.begin());
    }

    /// Swap the paste mask of a composite node; size must match.
    void set_composite_mask(NodeId id, const std::vector<std::uint8_t>& mask01) {
        Node& n = nodes_[id];
        require(n.op == Op::Composite, "set_composite_mask: not a composite");
        require(mask01.size() == n.mask.size(), "set_composite_mask: size mismatch");
        std::copy(mask01.begin(), mask01.end(), n.mask.begin());
    }

    /// Recompute every derived node from the current leaf values, in place.
    void refresh() {
        for (NodeId id = 0; id < (NodeId)nodes_.size(); ++id)
            if (nodes_[id].op != Op::Leaf) recompute(id);
    }

    // ---- elementwise ----

    NodeId add(NodeId a, NodeId b) { return ew(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return ew(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return ew(Op::Mul, a, b); }
    NodeId div(NodeId a, NodeId b) { return ew(Op::Div, a, b); }

    NodeId scale(NodeId a, double s) {
        Node n = unary(Op::Scale, a);
        n.d0 = s;
        return emit(std::move(n));
    }

    NodeId add_c(NodeId a, double c) {
        Node n = unary(Op::AddC, a);
        n.d0 = c;
        return emit(std::move(n));
    }

    /// Per-channel x*scale[c] + shift[c] on a (C,H,W) tensor.
    NodeId chan_affine(NodeId a, std::vector<double> sc, std::vector<double> sh) {
        const auto& x = nodes_[a].val;
        require(x.shape.size() == 3 && (int)sc.size() == x.shape[0] && sc.size() == sh.size(),
                "chan_affine: shape mismatch");
        Node n = unary(Op::ChanAffine, a);
        n.aux = std::move(sc);
        for (double v : sh) n.aux.push_back(v);
        return emit(std::move(n));
    }

    /// out = a * s[0], s a scalar node. Lets a whole tensor be scaled by a
    /// computed quantity (vector normalization, loss weighting).
    NodeId bcast_mul(NodeId a, NodeId s) {
        require(nodes_[s].val.size() == 1, "bcast_mul: scale must be scalar");
        return emit(make(Op::BcastMul, a, s, nodes_[a].val.shape));
    }

    NodeId lrelu(NodeId a, double slope) {
        Node n = unary(Op::LRelu, a);
        n.d0 = slope;
        return emit(std::move(n));
    }

    NodeId relu(NodeId a) { return lrelu(a, 0.0); }

    NodeId sigmoid(NodeId a) { return emit(unary(Op::Sigmoid, a)); }

    NodeId tanh_n(NodeId a) { return emit(unary(Op::Tanh, a)); }

    /// log(max(x, eps)); keeps the GAN losses finite at the score extremes.
    NodeId log_clamped(NodeId a, double eps) {
        Node n = unary(Op::LogC, a);
        n.d0 = eps;
        return emit(std::move(n));
    }

    NodeId clamp(NodeId a, double lo, double hi) {
        Node n = unary(Op::Clamp, a);
        n.d0 = lo;
        n.d1 = hi;
        return emit(std::move(n));
    }

    NodeId sqrt_n(NodeId a) { return emit(unary(Op::Sqrt, a)); }

    // ---- reductions ----

    NodeId sum(NodeId a) { return emit(make(Op::Sum, a, -1, Shape{1})); }

    NodeId mean(NodeId a) {
        require(nodes_[a].val.size() > 0, "mean: empty tensor");
        return emit(make(Op::Mean, a, -1, Shape{1}));
    }

    /// (C,H,W) -> (C): global average pool.
    NodeId chan_mean(NodeId a) {
        const auto& x = nodes_[a].val;
        require(x.shape.size() == 3, "chan_mean: want rank-3");
        return emit(make(Op::ChanMean, a, -1, Shape{x.shape[0]}));
    }

    // ---- linear algebra ----

    NodeId matmul_nn(NodeId a, NodeId b) {
        const auto& A = nodes_[a].val;
        const auto& B = nodes_[b].val;
        require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[0],
                "matmul_nn: shape mismatch " + shape_str(A.shape) + "x" + shape_str(B.shape));
        return emit(make(Op::MatMulNN, a, b, Shape{A.shape[0], B.shape[1]}));
    }

    /// C = A * B^T; gram(A) == matmul_nt(A, A).
    NodeId matmul_nt(NodeId a, NodeId b) {
        const auto& A = nodes_[a].val;
        const auto& B = nodes_[b].val;
        require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[1],
                "matmul_nt: shape mismatch");
        return emit(make(Op::MatMulNT, a, b, Shape{A.shape[0], B.shape[0]}));
    }

    NodeId matvec(NodeId w, NodeId x) {
        const auto& W = nodes_[w].val;
        const auto& v = nodes_[x].val;
        require(W.shape.size() == 2 && v.shape.size() == 1 && W.shape[1] == v.shape[0],
                "matvec: shape mismatch");
        return emit(make(Op::MatVec, w, x, Shape{W.shape[0]}));
    }

    // ---- image ops ----

    NodeId conv2d(NodeId x, NodeId w, int stride, int pad) {
        const auto& X = nodes_[x].val;
        const auto& W = nodes_[w].val;
        require(X.shape.size() == 3 && W.shape.size() == 4 && X.shape[0] == W.shape[1],
                "conv2d: shape mismatch");
        const int oh = kernels::conv_out_dim(X.shape[1], W.shape[2], stride, pad);
        const int ow = kernels::conv_out_dim(X.shape[2], W.shape[3], stride, pad);
        require(oh > 0 && ow > 0, "conv2d: empty output");
        Node n = make(Op::Conv2d, x, w, Shape{W.shape[0], oh, ow});
        n.i0 = stride;
        n.i1 = pad;
        return emit(std::move(n));
    }

    NodeId add_chan_bias(NodeId x, NodeId b) {
        const auto& X = nodes_[x].val;
        const auto& B = nodes_[b].val;
        require(X.shape.size() == 3 && B.shape.size() == 1 && B.shape[0] == X.shape[0],
                "add_chan_bias: shape mismatch");
        return emit(make(Op::AddChanBias, x, b, X.shape));
    }

    NodeId resize_bilinear(NodeId x, int oh, int ow) {
        const auto& X = nodes_[x].val;
        require(X.shape.size() == 3 && oh > 0 && ow > 0, "resize: bad args");
        Node n = make(Op::Resize, x, -1, Shape{X.shape[0], oh, ow});
        n.i0 = oh;
        n.i1 = ow;
        return emit(std::move(n));
    }

    NodeId concat_c(NodeId a, NodeId b) {
        const auto& A = nodes_[a].val;
        const auto& B = nodes_[b].val;
        require(A.shape.size() == 3 && B.shape.size() == 3 && A.shape[1] == B.shape[1] &&
                    A.shape[2] == B.shape[2],
                "concat_c: spatial mismatch");
        return emit(make(Op::ConcatC, a, b, Shape{A.shape[0] + B.shape[0], A.shape[1], A.shape[2]}));
    }

    NodeId crop(NodeId x, int top, int left, int h, int w) {
        const auto& X = nodes_[x].val;
        require(X.shape.size() == 3, "crop: want rank-3");
        require(top >= 0 && left >= 0 && top + h <= X.shape[1] && left + w <= X.shape[2],
                "crop: out-of-bounds bbox");
        Node n = make(Op::Crop, x, -1, Shape{X.shape[0], h, w});
        n.i0 = top;
        n.i1 = left;
        n.i2 = h;
        n.i3 = w;
        return emit(std::move(n));
    }

    /// The patch-to-canvas operator: patch copied at bbox into a zero canvas.
    NodeId embed(NodeId p, int top, int left, int canvas_h, int canvas_w) {
        const auto& P = nodes_[p].val;
        require(P.shape.size() == 3, "embed: want rank-3");
        require(top >= 0 && left >= 0 && top + P.shape[1] <= canvas_h && left + P.shape[2] <= canvas_w,
                "embed: patch exceeds canvas");
        Node n = make(Op::Embed, p, -1, Shape{P.shape[0], canvas_h, canvas_w});
        n.i0 = top;
        n.i1 = left;
        return emit(std::move(n));
    }

    /// Forward difference along x; last column zero.
    NodeId diff_x(NodeId a) {
        const auto& X = nodes_[a].val;
        require(X.shape.size() == 3 && X.shape[2] >= 2, "diff_x: width must be >= 2");
        return emit(make(Op::DiffX, a, -1, X.shape));
    }

    /// Forward difference along y; last row zero.
    NodeId diff_y(NodeId a) {
        const auto& X = nodes_[a].val;
        require(X.shape.size() == 3 && X.shape[1] >= 2, "diff_y: height must be >= 2");
        return emit(make(Op::DiffY, a, -1, X.shape));
    }

    NodeId reshape(NodeId a, Shape s) {
        require(shape_numel(s) == nodes_[a].val.size(), "reshape: element count mismatch");
        return emit(make(Op::Reshape, a, -1, std::move(s)));
    }

    /// Cross-entropy of softmax(logits) against a class index; returns scalar.
    NodeId softmax_xent(NodeId logits, int target) {
        const auto& L = nodes_[logits].val;
        require(L.shape.size() == 1 && target >= 0 && target < L.shape[0],
                "softmax_xent: bad target");
        Node n = make(Op::SoftmaxXent, logits, -1, Shape{1});
        n.i0 = target;
        return emit(std::move(n));
    }

    /// Masked paste of a generated patch over a source image. Binary mask, so
    /// the result is bit-for-bit the source wherever the mask is 0 and
    /// bit-for-bit the patch wherever it is 1. Gradients flow to the patch
    /// (and to the source, if it is a variable) through the matching pixels.
    NodeId composite(NodeId patch, NodeId source, int top, int left,
                     std::vector<std::uint8_t> mask01) {
        const auto& P = nodes_[patch].val;
        const auto& S = nodes_[source].val;
        require(P.shape.size() == 3 && S.shape.size() == 3 && P.shape[0] == S.shape[0],
                "composite: shape mismatch");
        const int h = P.shape[1], w = P.shape[2];
        require((std::int64_t)mask01.size() == (std::int64_t)h * w, "composite: mask size mismatch");
        require(top >= 0 && left >= 0 && top + h <= S.shape[1] && left + w <= S.shape[2],
                "composite: bbox outside source");
        Node n = make(Op::Composite, patch, source, S.shape);
        n.i0 = top;
        n.i1 = left;
        n.i2 = h;
        n.i3 = w;
        n.mask = std::move(mask01);
        return emit(std::move(n));
    }

    // ---- backward ----

    /// Accumulate adjoints of everything the scalar `loss` depends on.
    /// Previous gradients on the graph are discarded.
    void backward(NodeId loss) {
        require(nodes_[loss].val.size() == 1, "backward: loss must be scalar");
        require(nodes_[loss].needs_grad, "backward: loss does not depend on any input");
        // restrict the sweep to nodes the loss actually reaches
        std::vector<std::uint8_t> active(nodes_.size(), 0);
        std::vector<NodeId> stack{loss};
        active[loss] = 1;
        while (!stack.empty()) {
            const Node& n = nodes_[stack.back()];
            stack.pop_back();
            for (NodeId arg : {n.a, n.b})
                if (arg >= 0 && nodes_[arg].needs_grad && !active[arg]) {
                    active[arg] = 1;
                    stack.push_back(arg);
                }
        }
        for (size_t i = 0; i < nodes_.size(); ++i) {
            Node& n = nodes_[i];
            if (active[i]) {
                if (n.grad.same_shape(n.val))
                    n.grad.fill(T(0));
                else
                    n.grad = Tensor<T>(n.val.shape);
            } else if (n.grad.size() != 0) {
                n.grad = Tensor<T>();
            }
        }
        nodes_[loss].grad[0] = T(1);
        for (int id = (int)nodes_.size() - 1; id >= 0; --id) {
            if (!active[id]) continue;
            step_backward(id, active);
        }
    }

private:
    std::vector<Node> nodes_;

    NodeId leaf(Tensor<T> v, bool needs) {
        Node n;
        n.op = Op::Leaf;
        n.val = std::move(v);
        n.needs_grad = needs;
        nodes_.push_back(std::move(n));
        return (NodeId)nodes_.size() - 1;
    }

    Node make(Op op, NodeId a, NodeId b, Shape out_shape) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.val = Tensor<T>(std::move(out_shape));
        n.needs_grad = (a >= 0 && nodes_[a].needs_grad) || (b >= 0 && nodes_[b].needs_grad);
        return n;
    }

    Node unary(Op op, NodeId a) { return make(op, a, -1, nodes_[a].val.shape); }

    /// Record the node, then run its forward step once.
    NodeId emit(Node n) {
        nodes_.push_back(std::move(n));
        const NodeId id = (NodeId)nodes_.size() - 1;
        recompute(id);
        return id;
    }

    NodeId ew(Op op, NodeId a, NodeId b) {
        require(nodes_[a].val.same_shape(nodes_[b].val),
                "elementwise: shape mismatch " + shape_str(nodes_[a].val.shape) + " vs " +
                    shape_str(nodes_[b].val.shape));
        return emit(make(op, a, b, nodes_[a].val.shape));
    }

    /// Forward step for one node, writing nodes_[id].val in place. Shared by
    /// graph construction and refresh(), so both produce identical values.
    void recompute(NodeId id) {
        Node& n = nodes_[id];
        const Tensor<T>& A = n.a >= 0 ? nodes_[n.a].val : n.val;
        const Tensor<T>& B = n.b >= 0 ? nodes_[n.b].val : n.val;
        Tensor<T>& out = n.val;

        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
            break;
        case Op::Sub:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
            break;
        case Op::Mul:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
            break;
        case Op::Div:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] / B[i];
            break;
        case Op::Scale:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] * T(n.d0);
            break;
        case Op::AddC:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] + T(n.d0);
            break;
        case Op::ChanAffine: {
            const int ch = out.shape[0], hw = out.shape[1] * out.shape[2];
            for (int c = 0; c < ch; ++c)
                for (int i = 0; i < hw; ++i)
                    out[(std::int64_t)c * hw + i] =
                        A[(std::int64_t)c * hw + i] * T(n.aux[c]) + T(n.aux[ch + c]);
            break;
        }
        case Op::BcastMul: {
            const T sv = B[0];
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] * sv;
            break;
        }
        case Op::LRelu:
            for (std::int64_t i = 0; i < out.size(); ++i) {
                const T& x = A[i];
                out[i] = real_part(x) > 0.0 ? x : x * T(n.d0);
            }
            break;
        case Op::Sigmoid:
            for (std::int64_t i = 0; i < out.size(); ++i) {
                using std::exp;
                out[i] = T(1) / (T(1) + exp(-A[i]));
            }
            break;
        case Op::Tanh:
            for (std::int64_t i = 0; i < out.size(); ++i) {
                using std::tanh;
                out[i] = tanh(A[i]);
            }
            break;
        case Op::LogC:
            for (std::int64_t i = 0; i < out.size(); ++i) {
                using std::log;
                const T& x = A[i];
                out[i] = real_part(x) > n.d0 ? log(x) : T(std::log(n.d0));
            }
            break;
        case Op::Clamp:
            for (std::int64_t i = 0; i < out.size(); ++i) {
                const T& x = A[i];
                out[i] = real_part(x) < n.d0 ? T(n.d0) : (real_part(x) > n.d1 ? T(n.d1) : x);
            }
            break;
        case Op::Sqrt:
            for (std::int64_t i = 0; i < out.size(); ++i) {
                using std::sqrt;
                out[i] = sqrt(A[i]);
            }
            break;
        case Op::Sum: {
            T acc(0);
            for (std::int64_t i = 0; i < A.size(); ++i) acc += A[i];
            out[0] = acc;
            break;
        }
        case Op::Mean: {
            T acc(0);
            for (std::int64_t i = 0; i < A.size(); ++i) acc += A[i];
            out[0] = acc * T(1.0 / (double)A.size());
            break;
        }
        case Op::ChanMean: {
            const int hw = A.shape[1] * A.shape[2];
            for (int c = 0; c < A.shape[0]; ++c) {
                T acc(0);
                for (int i = 0; i < hw; ++i) acc += A[(std::int64_t)c * hw + i];
                out[c] = acc * T(1.0 / hw);
            }
            break;
        }
        case Op::MatMulNN:
            kernels::matmul_nn(A, B, out);
            break;
        case Op::MatMulNT:
            kernels::matmul_nt(A, B, out);
            break;
        case Op::MatVec:
            for (int i = 0; i < A.shape[0]; ++i) {
                T acc(0);
                for (int j = 0; j < A.shape[1]; ++j) acc += A[(std::int64_t)i * A.shape[1] + j] * B[j];
                out[i] = acc;
            }
            break;
        case Op::Conv2d:
            kernels::conv2d_forward(A, B, n.i0, n.i1, out);
            break;
        case Op::AddChanBias: {
            const int hw = A.shape[1] * A.shape[2];
            for (int c = 0; c < A.shape[0]; ++c)
                for (int i = 0; i < hw; ++i)
                    out[(std::int64_t)c * hw + i] = A[(std::int64_t)c * hw + i] + B[c];
            break;
        }
        case Op::Resize:
            kernels::resize_bilinear_forward(A, out);
            break;
        case Op::ConcatC:
            std::copy(A.data.begin(), A.data.end(), out.data.begin());
            std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.size());
            break;
        case Op::Crop:
            for (int c = 0; c < A.shape[0]; ++c)
                for (int y = 0; y < n.i2; ++y)
                    for (int z = 0; z < n.i3; ++z)
                        out.at(c, y, z) = A.at(c, n.i0 + y, n.i1 + z);
            break;
        case Op::Embed:
            out.fill(T(0));
            for (int c = 0; c < A.shape[0]; ++c)
                for (int y = 0; y < A.shape[1]; ++y)
                    for (int z = 0; z < A.shape[2]; ++z) out.at(c, n.i0 + y, n.i1 + z) = A.at(c, y, z);
            break;
        case Op::DiffX:
            for (int c = 0; c < A.shape[0]; ++c)
                for (int y = 0; y < A.shape[1]; ++y) {
                    for (int z = 0; z + 1 < A.shape[2]; ++z)
                        out.at(c, y, z) = A.at(c, y, z + 1) - A.at(c, y, z);
                    out.at(c, y, A.shape[2] - 1) = T(0);
                }
            break;
        case Op::DiffY:
            for (int c = 0; c < A.shape[0]; ++c) {
                for (int y = 0; y + 1 < A.shape[1]; ++y)
                    for (int z = 0; z < A.shape[2]; ++z)
                        out.at(c, y, z) = A.at(c, y + 1, z) - A.at(c, y, z);
                for (int z = 0; z < A.shape[2]; ++z) out.at(c, A.shape[1] - 1, z) = T(0);
            }
            break;
        case Op::Reshape:
            std::copy(A.data.begin(), A.data.end(), out.data.begin());
            break;
        case Op::SoftmaxXent: {
            T m = A[0];
            for (int i = 1; i < A.shape[0]; ++i)
                if (real_part(A[i]) > real_part(m)) m = A[i];
            T acc(0);
            for (int i = 0; i < A.shape[0]; ++i) {
                using std::exp;
                acc += exp(A[i] - m);
            }
            using std::log;
            out[0] = m + log(acc) - A[n.i0];
            break;
        }
        case Op::Composite: {
            const int h = n.i2, w = n.i3;
            std::copy(B.data.begin(), B.data.end(), out.data.begin());
            for (int c = 0; c < A.shape[0]; ++c)
                for (int y = 0; y < h; ++y)
                    for (int z = 0; z < w; ++z)
                        if (n.mask[(size_t)y * w + z]) out.at(c, n.i0 + y, n.i1 + z) = A.at(c, y, z);
            break;
        }
        }
    }

    bool wants(NodeId arg) const { return arg >= 0 && nodes_[arg].needs_grad; }

    void step_backward(NodeId id, const std::vector<std::uint8_t>& active) {
        Node& n = nodes_[id];
        const Tensor<T>& g = n.grad;
        auto garr = [&](NodeId arg) -> Tensor<T>& { return nodes_[arg].grad; };
        auto varr = [&](NodeId arg) -> const Tensor<T>& { return nodes_[arg].val; };
        const bool wa = wants(n.a) && n.a >= 0 && active[n.a];
        const bool wb = wants(n.b) && n.b >= 0 && active[n.b];

        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i];
            if (wb)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.b)[i] += g[i];
            break;
        case Op::Sub:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i];
            if (wb)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.b)[i] -= g[i];
            break;
        case Op::Mul:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i] * varr(n.b)[i];
            if (wb)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.b)[i] += g[i] * varr(n.a)[i];
            break;
        case Op::Div:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i] / varr(n.b)[i];
            if (wb)
                for (std::int64_t i = 0; i < g.size(); ++i)
                    garr(n.b)[i] -= g[i] * n.val[i] / varr(n.b)[i];
            break;
        case Op::Scale:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i] * T(n.d0);
            break;
        case Op::AddC:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i];
            break;
        case Op::ChanAffine:
            if (wa) {
                const int ch = n.val.shape[0], hw = n.val.shape[1] * n.val.shape[2];
                for (int c = 0; c < ch; ++c)
                    for (int i = 0; i < hw; ++i)
                        garr(n.a)[(std::int64_t)c * hw + i] += g[(std::int64_t)c * hw + i] * T(n.aux[c]);
            }
            break;
        case Op::BcastMul:
            if (wa) {
                const T sv = varr(n.b)[0];
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i] * sv;
            }
            if (wb) {
                T accv(0);
                for (std::int64_t i = 0; i < g.size(); ++i) accv += g[i] * varr(n.a)[i];
                garr(n.b)[0] += accv;
            }
            break;
        case Op::LRelu:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i)
                    garr(n.a)[i] += real_part(varr(n.a)[i]) > 0.0 ? g[i] : g[i] * T(n.d0);
            break;
        case Op::Sigmoid:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i)
                    garr(n.a)[i] += g[i] * n.val[i] * (T(1) - n.val[i]);
            break;
        case Op::Tanh:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i)
                    garr(n.a)[i] += g[i] * (T(1) - n.val[i] * n.val[i]);
            break;
        case Op::LogC:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i)
                    if (real_part(varr(n.a)[i]) > n.d0) garr(n.a)[i] += g[i] / varr(n.a)[i];
            break;
        case Op::Clamp:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    const double x = real_part(varr(n.a)[i]);
                    if (x >= n.d0 && x <= n.d1) garr(n.a)[i] += g[i];
                }
            break;
        case Op::Sqrt:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i)
                    if (real_part(n.val[i]) > 0.0) garr(n.a)[i] += g[i] * T(0.5) / n.val[i];
            break;
        case Op::Sum:
            if (wa)
                for (std::int64_t i = 0; i < garr(n.a).size(); ++i) garr(n.a)[i] += g[0];
            break;
        case Op::Mean:
            if (wa) {
                const T s = g[0] * T(1.0 / (double)garr(n.a).size());
                for (std::int64_t i = 0; i < garr(n.a).size(); ++i) garr(n.a)[i] += s;
            }
            break;
        case Op::ChanMean:
            if (wa) {
                const auto& X = varr(n.a);
                const int hw = X.shape[1] * X.shape[2];
                for (int c = 0; c < X.shape[0]; ++c) {
                    const T s = g[c] * T(1.0 / hw);
                    for (int i = 0; i < hw; ++i) garr(n.a)[(std::int64_t)c * hw + i] += s;
                }
            }
            break;
        case Op::MatMulNN: {
            // dA += dC B^T ; dB += A^T dC
            if (wa) {
                Tensor<T> tmp(varr(n.a).shape);
                kernels::matmul_nt(g, varr(n.b), tmp);
                acc(garr(n.a), tmp);
            }
            if (wb) {
                Tensor<T> tmp(varr(n.b).shape);
                kernels::matmul_tn(varr(n.a), g, tmp);
                acc(garr(n.b), tmp);
            }
            break;
        }
        case Op::MatMulNT: {
            // C = A B^T: dA += dC B ; dB += dC^T A
            if (wa) {
                Tensor<T> tmp(varr(n.a).shape);
                kernels::matmul_nn(g, varr(n.b), tmp);
                acc(garr(n.a), tmp);
            }
            if (wb) {
                Tensor<T> tmp(varr(n.b).shape);
                kernels::matmul_tn(g, varr(n.a), tmp);
                acc(garr(n.b), tmp);
            }
            break;
        }
        case Op::MatVec: {
            const auto& W = varr(n.a);
            const auto& x = varr(n.b);
            const int m = W.shape[0], k = W.shape[1];
            if (wa)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < k; ++j) garr(n.a)[(std::int64_t)i * k + j] += g[i] * x[j];
            if (wb)
                for (int j = 0; j < k; ++j) {
                    T accv(0);
                    for (int i = 0; i < m; ++i) accv += W[(std::int64_t)i * k + j] * g[i];
                    garr(n.b)[j] += accv;
                }
            break;
        }
        case Op::Conv2d:
            if (wa) kernels::conv2d_grad_input(g, varr(n.b), n.i0, n.i1, garr(n.a));
            if (wb) kernels::conv2d_grad_weight(varr(n.a), g, n.i0, n.i1, garr(n.b));
            break;
        case Op::AddChanBias:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i];
            if (wb) {
                const int hw = n.val.shape[1] * n.val.shape[2];
                for (int c = 0; c < n.val.shape[0]; ++c) {
                    T accv(0);
                    for (int i = 0; i < hw; ++i) accv += g[(std::int64_t)c * hw + i];
                    garr(n.b)[c] += accv;
                }
            }
            break;
        case Op::Resize:
            if (wa) kernels::resize_bilinear_backward(g, garr(n.a));
            break;
        case Op::ConcatC:
            if (wa)
                for (std::int64_t i = 0; i < varr(n.a).size(); ++i) garr(n.a)[i] += g[i];
            if (wb) {
                const std::int64_t off = varr(n.a).size();
                for (std::int64_t i = 0; i < varr(n.b).size(); ++i) garr(n.b)[i] += g[off + i];
            }
            break;
        case Op::Crop:
            if (wa) {
                auto& ga = garr(n.a);
                for (int c = 0; c < n.val.shape[0]; ++c)
                    for (int y = 0; y < n.i2; ++y)
                        for (int z = 0; z < n.i3; ++z)
                            ga.at(c, n.i0 + y, n.i1 + z) += g.at(c, y, z);
            }
            break;
        case Op::Embed:
            if (wa) {
                auto& ga = garr(n.a);
                for (int c = 0; c < ga.shape[0]; ++c)
                    for (int y = 0; y < ga.shape[1]; ++y)
                        for (int z = 0; z < ga.shape[2]; ++z)
                            ga.at(c, y, z) += g.at(c, n.i0 + y, n.i1 + z);
            }
            break;
        case Op::DiffX:
            if (wa) {
                auto& ga = garr(n.a);
                const int W = n.val.shape[2];
                for (int c = 0; c < n.val.shape[0]; ++c)
                    for (int y = 0; y < n.val.shape[1]; ++y)
                        for (int z = 0; z + 1 < W; ++z) {
                            const T gv = g.at(c, y, z);
                            ga.at(c, y, z + 1) += gv;
                            ga.at(c, y, z) -= gv;
                        }
            }
            break;
        case Op::DiffY:
            if (wa) {
                auto& ga = garr(n.a);
                const int H = n.val.shape[1];
                for (int c = 0; c < n.val.shape[0]; ++c)
                    for (int y = 0; y + 1 < H; ++y)
                        for (int z = 0; z < n.val.shape[2]; ++z) {
                            const T gv = g.at(c, y, z);
                            ga.at(c, y + 1, z) += gv;
                            ga.at(c, y, z) -= gv;
                        }
            }
            break;
        case Op::Reshape:
            if (wa)
                for (std::int64_t i = 0; i < g.size(); ++i) garr(n.a)[i] += g[i];
            break;
        case Op::SoftmaxXent:
            if (wa) {
                const auto& L = varr(n.a);
                T m = L[0];
                for (int i = 1; i < L.shape[0]; ++i)
                    if (real_part(L[i]) > real_part(m)) m = L[i];
                T z(0);
                for (int i = 0; i < L.shape[0]; ++i) {
                    using std::exp;
                    z += exp(L[i] - m);
                }
                for (int i = 0; i < L.shape[0]; ++i) {
                    using std::exp;
                    T p = exp(L[i] - m) / z;
                    if (i == n.i0) p = p - T(1);
                    garr(n.a)[i] += g[0] * p;
                }
            }
            break;
        case Op::Composite: {
            const int h = n.i2, w = n.i3;
            if (wa) {
                auto& gp = garr(n.a);
                for (int c = 0; c < gp.shape[0]; ++c)
                    for (int y = 0; y < h; ++y)
                        for (int z = 0; z < w; ++z)
                            if (n.mask[(size_t)y * w + z]) gp.at(c, y, z) += g.at(c, n.i0 + y, n.i1 + z);
            }
            if (wb) {
                auto& gs = garr(n.b);
                for (int c = 0; c < gs.shape[0]; ++c)
                    for (int y = 0; y < gs.shape[1]; ++y)
                        for (int z = 0; z < gs.shape[2]; ++z) {
                            const bool inside = y >= n.i0 && y < n.i0 + h && z >= n.i1 && z < n.i1 + w;
                            const bool pasted =
                                inside && n.mask[(size_t)(y - n.i0) * w + (z - n.i1)];
                            if (!pasted) gs.at(c, y, z) += g.at(c, y, z);
                        }
            }
            break;
        }
        }
    }

    static void acc(Tensor<T>& dst, const Tensor<T>& src) {
        for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
};

using GraphD = Graph<double>;

} // namespace advmk::ad
