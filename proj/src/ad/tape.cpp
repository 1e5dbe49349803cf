#include "ad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ad/ops.hpp"
#include "kernels/kernels.hpp"

namespace optlab::ad {

std::string_view op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::Neg: return "neg";
        case OpKind::Square: return "square";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Recip: return "reciprocal";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Elu: return "elu";
        case OpKind::MatMul: return "matmul";
        case OpKind::AddRowVec: return "add_rowvec";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::SliceCols: return "slice_cols";
        case OpKind::Reshape: return "reshape";
        case OpKind::TileCols: return "tile_cols";
        case OpKind::RowSum: return "row_sum";
        case OpKind::ReduceSum: return "reduce_sum";
        case OpKind::ReduceMean: return "reduce_mean";
        case OpKind::L2Norm: return "l2_norm";
        case OpKind::NormalizeL2: return "normalize_l2";
        case OpKind::SoftmaxRows: return "softmax_rows";
        case OpKind::SoftmaxXent: return "softmax_xent";
        case OpKind::SquaredError: return "squared_error";
        case OpKind::ClampMax: return "clamp_max";
        case OpKind::StopGrad: return "stop_gradient";
        case OpKind::Custom: return "custom";
    }
    return "?";
}

Tape* common_tape(std::span<const Tensor> ts) {
    Tape* tape = nullptr;
    for (const Tensor& t : ts) {
        if (!t.on_tape()) continue;
        if (tape && t.tape() != tape)
            throw std::invalid_argument("operation mixes tensors from two different tapes");
        tape = t.tape();
    }
    return tape;
}

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
    Tensor out = Tensor::constant(std::move(shape), std::move(values));
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    out.out_idx_ = 0;
    nodes_.push_back(Node{OpKind::Leaf, {}, {out}, {}, {}, nullptr});
    return out;
}

Tensor Tape::leaf(const Tensor& constant_like) {
    return leaf(constant_like.shape(), constant_like.values());
}

Tensor Tape::emit(OpKind kind, std::vector<Tensor> inputs, Shape out_shape,
                  std::vector<double> out_values, Attrs attrs,
                  std::vector<std::vector<double>> saved) {
    Tensor out = Tensor::constant(std::move(out_shape), std::move(out_values));
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    out.out_idx_ = 0;
    nodes_.push_back(Node{kind, std::move(inputs), {out}, attrs, std::move(saved), nullptr});
    return out;
}

Tensor Tape::emit_view(OpKind kind, std::vector<Tensor> inputs, Shape out_shape, Attrs attrs) {
    Tensor out = inputs.at(0).detach();  // shares storage
    out.shape_ = std::move(out_shape);
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    out.out_idx_ = 0;
    nodes_.push_back(Node{kind, std::move(inputs), {out}, attrs, {}, nullptr});
    return out;
}

std::vector<Tensor> Tape::emit_multi(OpKind kind, std::vector<Tensor> inputs,
                                     std::vector<Shape> out_shapes,
                                     std::vector<std::vector<double>> out_values, Attrs attrs,
                                     std::vector<std::vector<double>> saved,
                                     const CustomOp* custom) {
    std::vector<Tensor> outs;
    outs.reserve(out_shapes.size());
    const int id = static_cast<int>(nodes_.size());
    for (std::size_t i = 0; i < out_shapes.size(); ++i) {
        Tensor t = Tensor::constant(std::move(out_shapes[i]), std::move(out_values[i]));
        t.tape_ = this;
        t.node_ = id;
        t.out_idx_ = static_cast<int>(i);
        outs.push_back(std::move(t));
    }
    nodes_.push_back(Node{kind, std::move(inputs), outs, attrs, std::move(saved), custom});
    return outs;
}

// ---------------------------------------------------------------------------
// raw backward
// ---------------------------------------------------------------------------

namespace {

using Buf = std::vector<double>;
using AdjTable = std::vector<std::vector<Buf>>;

// Adjoint slot for a node input; nullptr when the input is a constant.
Buf* slot(AdjTable& adj, const std::deque<Node>* nodes, const Tensor& t) {
    if (!t.on_tape()) return nullptr;
    auto& per_out = adj[t.node()];
    if (per_out.empty()) per_out.resize((*nodes)[t.node()].outputs.size());
    Buf& b = per_out[t.out_index()];
    if (b.empty()) b.assign(t.numel(), 0.0);
    return &b;
}

void acc_scaled(Buf* dst, const double* src, double scale, std::size_t n) {
    if (!dst) return;
    kern::vaxpy(scale, src, dst->data(), n);
}

}  // namespace

void Tape::backward_node(std::size_t i, AdjTable& adj) const {
    const Node& nd = nodes_[i];
    if (nd.kind == OpKind::Leaf || nd.kind == OpKind::StopGrad) return;

    auto up = [&](std::size_t oi) -> const Buf* {
        if (adj[i].empty() || adj[i][oi].empty()) return nullptr;
        return &adj[i][oi];
    };
    const Buf* g = up(0);

    auto in_slot = [&](std::size_t k) { return slot(adj, &nodes_, nd.inputs[k]); };

    switch (nd.kind) {
        case OpKind::Add:
        case OpKind::Sub: {
            if (!g) return;
            const double sgn = nd.kind == OpKind::Sub ? -1.0 : 1.0;
            const Tensor& a = nd.inputs[0];
            const Tensor& b = nd.inputs[1];
            Buf* da = in_slot(0);
            Buf* db = in_slot(1);
            const std::size_t n = nd.outputs[0].numel();
            if (da) {
                if (a.numel() == 1 && n > 1)
                    (*da)[0] += kern::sum(g->data(), n);
                else
                    kern::vaxpy(1.0, g->data(), da->data(), n);
            }
            if (db) {
                if (b.numel() == 1 && n > 1)
                    (*db)[0] += sgn * kern::sum(g->data(), n);
                else
                    kern::vaxpy(sgn, g->data(), db->data(), n);
            }
            break;
        }
        case OpKind::Mul: {
            if (!g) return;
            const Tensor& a = nd.inputs[0];
            const Tensor& b = nd.inputs[1];
            Buf* da = in_slot(0);
            Buf* db = in_slot(1);
            const std::size_t n = nd.outputs[0].numel();
            if (da) {
                if (a.numel() == 1 && n > 1) {
                    (*da)[0] += kern::dot(g->data(), b.data(), n);
                } else if (b.numel() == 1 && n > 1) {
                    kern::vaxpy(b.data()[0], g->data(), da->data(), n);
                } else {
                    for (std::size_t j = 0; j < n; ++j) (*da)[j] += (*g)[j] * b.data()[j];
                }
            }
            if (db) {
                if (b.numel() == 1 && n > 1) {
                    (*db)[0] += kern::dot(g->data(), a.data(), n);
                } else if (a.numel() == 1 && n > 1) {
                    kern::vaxpy(a.data()[0], g->data(), db->data(), n);
                } else {
                    for (std::size_t j = 0; j < n; ++j) (*db)[j] += (*g)[j] * a.data()[j];
                }
            }
            break;
        }
        case OpKind::Div: {
            if (!g) return;
            const Tensor& a = nd.inputs[0];
            const Tensor& b = nd.inputs[1];
            const Tensor& out = nd.outputs[0];
            Buf* da = in_slot(0);
            Buf* db = in_slot(1);
            const std::size_t n = out.numel();
            if (da) {
                if (a.numel() == 1 && n > 1) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += (*g)[j] / b.data()[j];
                    (*da)[0] += acc;
                } else if (b.numel() == 1 && n > 1) {
                    kern::vaxpy(1.0 / b.data()[0], g->data(), da->data(), n);
                } else {
                    for (std::size_t j = 0; j < n; ++j) (*da)[j] += (*g)[j] / b.data()[j];
                }
            }
            if (db) {
                if (b.numel() == 1 && n > 1) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += (*g)[j] * out.data()[j];
                    (*db)[0] -= acc / b.data()[0];
                } else if (a.numel() == 1 && n > 1) {
                    for (std::size_t j = 0; j < n; ++j)
                        (*db)[j] -= (*g)[j] * out.data()[j] / b.data()[j];
                } else {
                    for (std::size_t j = 0; j < n; ++j)
                        (*db)[j] -= (*g)[j] * out.data()[j] / b.data()[j];
                }
            }
            break;
        }
        case OpKind::Neg:
            if (g) acc_scaled(in_slot(0), g->data(), -1.0, g->size());
            break;
        case OpKind::Square: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* a = nd.inputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j) (*da)[j] += 2.0 * a[j] * (*g)[j];
            }
            break;
        }
        case OpKind::Sqrt: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* out = nd.outputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j) (*da)[j] += 0.5 * (*g)[j] / out[j];
            }
            break;
        }
        case OpKind::Recip: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* out = nd.outputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j) (*da)[j] -= (*g)[j] * out[j] * out[j];
            }
            break;
        }
        case OpKind::Exp: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* out = nd.outputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j) (*da)[j] += (*g)[j] * out[j];
            }
            break;
        }
        case OpKind::Log: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* a = nd.inputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j) (*da)[j] += (*g)[j] / a[j];
            }
            break;
        }
        case OpKind::Sigmoid: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* out = nd.outputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j)
                    (*da)[j] += (*g)[j] * out[j] * (1.0 - out[j]);
            }
            break;
        }
        case OpKind::Tanh: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* out = nd.outputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j)
                    (*da)[j] += (*g)[j] * (1.0 - out[j] * out[j]);
            }
            break;
        }
        case OpKind::Relu: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* a = nd.inputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j)
                    if (a[j] > 0.0) (*da)[j] += (*g)[j];
            }
            break;
        }
        case OpKind::Elu: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* a = nd.inputs[0].data();
                const double* out = nd.outputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j)
                    (*da)[j] += (*g)[j] * (a[j] > 0.0 ? 1.0 : out[j] + 1.0);
            }
            break;
        }
        case OpKind::MatMul: {
            if (!g) return;
            const Tensor& a = nd.inputs[0];
            const Tensor& b = nd.inputs[1];
            const bool ta = nd.attrs.trans_a, tb = nd.attrs.trans_b;
            const std::size_t m = nd.outputs[0].rows(), n = nd.outputs[0].cols();
            const std::size_t k = ta ? a.rows() : a.cols();
            if (Buf* da = in_slot(0)) {
                // d(opA) = G * opB^T, transposed back if the operand was stored transposed
                if (!ta)
                    kern::matmul(false, !tb, m, n, k, g->data(), b.data(), da->data(), true);
                else if (!tb)
                    kern::matmul(false, true, k, n, m, b.data(), g->data(), da->data(), true);
                else
                    kern::matmul(true, true, k, n, m, b.data(), g->data(), da->data(), true);
            }
            if (Buf* db = in_slot(1)) {
                // d(opB) = opA^T * G
                if (!tb)
                    kern::matmul(!ta, false, k, m, n, a.data(), g->data(), db->data(), true);
                else if (!ta)
                    kern::matmul(true, false, n, m, k, g->data(), a.data(), db->data(), true);
                else
                    kern::matmul(true, true, n, m, k, g->data(), a.data(), db->data(), true);
            }
            break;
        }
        case OpKind::AddRowVec: {
            if (!g) return;
            const std::size_t r = nd.outputs[0].rows(), c = nd.outputs[0].cols();
            if (Buf* dm = in_slot(0)) kern::vaxpy(1.0, g->data(), dm->data(), r * c);
            if (Buf* dv = in_slot(1)) {
                for (std::size_t i2 = 0; i2 < r; ++i2)
                    for (std::size_t j = 0; j < c; ++j) (*dv)[j] += (*g)[i2 * c + j];
            }
            break;
        }
        case OpKind::ConcatCols: {
            if (!g) return;
            const std::size_t r = nd.outputs[0].rows(), ctot = nd.outputs[0].cols();
            std::size_t off = 0;
            for (std::size_t k2 = 0; k2 < nd.inputs.size(); ++k2) {
                const std::size_t c = nd.inputs[k2].cols();
                if (Buf* dk = in_slot(k2)) {
                    for (std::size_t i2 = 0; i2 < r; ++i2)
                        for (std::size_t j = 0; j < c; ++j)
                            (*dk)[i2 * c + j] += (*g)[i2 * ctot + off + j];
                }
                off += c;
            }
            break;
        }
        case OpKind::SliceCols: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const std::size_t r = nd.inputs[0].rows(), c = nd.inputs[0].cols();
                const std::size_t start = nd.attrs.i0, len = nd.attrs.i1;
                for (std::size_t i2 = 0; i2 < r; ++i2)
                    for (std::size_t j = 0; j < len; ++j)
                        (*da)[i2 * c + start + j] += (*g)[i2 * len + j];
            }
            break;
        }
        case OpKind::Reshape:
            if (g) acc_scaled(in_slot(0), g->data(), 1.0, g->size());
            break;
        case OpKind::TileCols: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const std::size_t r = nd.inputs[0].numel(), c = nd.attrs.i0;
                for (std::size_t i2 = 0; i2 < r; ++i2) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += (*g)[i2 * c + j];
                    (*da)[i2] += acc;
                }
            }
            break;
        }
        case OpKind::RowSum: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const std::size_t r = nd.inputs[0].rows(), c = nd.inputs[0].cols();
                for (std::size_t i2 = 0; i2 < r; ++i2)
                    for (std::size_t j = 0; j < c; ++j) (*da)[i2 * c + j] += (*g)[i2];
            }
            break;
        }
        case OpKind::ReduceSum: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double gv = (*g)[0];
                for (double& d : *da) d += gv;
            }
            break;
        }
        case OpKind::ReduceMean: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double gv = (*g)[0] / static_cast<double>(nd.inputs[0].numel());
                for (double& d : *da) d += gv;
            }
            break;
        }
        case OpKind::L2Norm: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double norm = nd.outputs[0].data()[0];
                if (norm > 0.0) acc_scaled(da, nd.inputs[0].data(), (*g)[0] / norm, da->size());
            }
            break;
        }
        case OpKind::NormalizeL2: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double norm = nd.saved[0][0];
                if (norm > 0.0) {
                    const double* out = nd.outputs[0].data();
                    const double proj = kern::dot(out, g->data(), g->size());
                    for (std::size_t j = 0; j < g->size(); ++j)
                        (*da)[j] += ((*g)[j] - out[j] * proj) / norm;
                }
            }
            break;
        }
        case OpKind::SoftmaxRows: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const std::size_t r = nd.outputs[0].rows(), c = nd.outputs[0].cols();
                const double* p = nd.outputs[0].data();
                for (std::size_t i2 = 0; i2 < r; ++i2) {
                    double dotgp = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dotgp += (*g)[i2 * c + j] * p[i2 * c + j];
                    for (std::size_t j = 0; j < c; ++j)
                        (*da)[i2 * c + j] += p[i2 * c + j] * ((*g)[i2 * c + j] - dotgp);
                }
            }
            break;
        }
        case OpKind::SoftmaxXent: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const std::size_t r = nd.inputs[0].rows(), c = nd.inputs[0].cols();
                const double* p = nd.saved[0].data();  // softmax probabilities
                const double* y = nd.inputs[1].data();
                const double scale = (*g)[0] / static_cast<double>(r);
                for (std::size_t j = 0; j < r * c; ++j) (*da)[j] += scale * (p[j] - y[j]);
            }
            break;
        }
        case OpKind::SquaredError: {
            if (!g) return;
            const std::size_t n = nd.inputs[0].numel();
            const double scale = 2.0 * (*g)[0] / static_cast<double>(n);
            const double* p = nd.inputs[0].data();
            const double* t = nd.inputs[1].data();
            if (Buf* dp = in_slot(0))
                for (std::size_t j = 0; j < n; ++j) (*dp)[j] += scale * (p[j] - t[j]);
            if (Buf* dt = in_slot(1))
                for (std::size_t j = 0; j < n; ++j) (*dt)[j] -= scale * (p[j] - t[j]);
            break;
        }
        case OpKind::ClampMax: {
            if (!g) return;
            if (Buf* da = in_slot(0)) {
                const double* a = nd.inputs[0].data();
                for (std::size_t j = 0; j < g->size(); ++j)
                    if (a[j] < nd.attrs.scalar) (*da)[j] += (*g)[j];
            }
            break;
        }
        case OpKind::Custom: {
            std::vector<const Buf*> out_adj(nd.outputs.size());
            bool any = false;
            for (std::size_t oi = 0; oi < nd.outputs.size(); ++oi) {
                out_adj[oi] = up(oi);
                any = any || out_adj[oi];
            }
            if (!any) return;
            std::vector<Buf*> in_adj(nd.inputs.size());
            for (std::size_t k2 = 0; k2 < nd.inputs.size(); ++k2) in_adj[k2] = in_slot(k2);
            nd.custom->backward(nd, out_adj, in_adj);
            break;
        }
        default:
            throw std::logic_error("backward: unhandled op " + std::string(op_name(nd.kind)));
    }
}

GradientMap Tape::backward(const Tensor& loss) const {
    GradientMap out;
    out.tape_ = this;
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss tensor");
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_str(loss.shape()));
    if (!loss.on_tape()) return out;  // constant loss: all gradients are zero
    if (loss.tape() != this) throw std::invalid_argument("backward: loss node not on this tape");

    AdjTable adj(nodes_.size());
    adj[loss.node()].resize(nodes_[loss.node()].outputs.size());
    adj[loss.node()][loss.out_index()] = {1.0};

    for (std::ptrdiff_t i = loss.node(); i >= 0; --i) {
        if (adj[i].empty()) continue;
        bool any = false;
        for (const Buf& b : adj[i]) any = any || !b.empty();
        if (!any) continue;
        backward_node(static_cast<std::size_t>(i), adj);
        if (nodes_[i].kind == OpKind::Leaf) {
            out.grads_.emplace(static_cast<int>(i), std::move(adj[i][0]));
        }
        adj[i].clear();
        adj[i].shrink_to_fit();
    }
    return out;
}

Tensor GradientMap::grad_of(const Tensor& t) const {
    if (!t.on_tape()) return Tensor::zeros(t.shape());
    if (t.tape() != tape_) throw std::invalid_argument("grad_of: tensor from a different tape");
    if (tape_->node(t.node()).kind != OpKind::Leaf)
        throw std::invalid_argument("grad_of: gradients are kept for leaf tensors only");
    auto it = grads_.find(t.node());
    if (it == grads_.end()) return Tensor::zeros(t.shape());
    return Tensor::constant(t.shape(), it->second);
}

bool GradientMap::has(const Tensor& t) const {
    return t.on_tape() && t.tape() == tape_ && grads_.count(t.node()) > 0;
}

// ---------------------------------------------------------------------------
// taped backward (differentiable gradients)
// ---------------------------------------------------------------------------

namespace {

Tensor ones_like(const Tensor& t, double v = 1.0) { return Tensor::full(t.shape(), v); }

}  // namespace

std::vector<Tensor> Tape::grad_taped(const Tensor& loss, std::span<const Tensor> wrt) {
    if (loss.numel() != 1)
        throw std::invalid_argument("grad_taped: loss must be a scalar, got shape " +
                                    shape_str(loss.shape()));
    auto zeros_result = [&] {
        std::vector<Tensor> r;
        for (const Tensor& w : wrt) r.push_back(Tensor::zeros(w.shape()));
        return r;
    };
    if (!loss.on_tape()) return zeros_result();
    if (loss.tape() != this) throw std::invalid_argument("grad_taped: loss not on this tape");

    // wrt tensors act as the frontier: their adjoints are collected and not
    // pushed further down (so hyperadam cells upstream are never visited).
    std::unordered_map<std::int64_t, std::size_t> frontier;
    for (std::size_t k = 0; k < wrt.size(); ++k) {
        const Tensor& w = wrt[k];
        if (!w.on_tape()) continue;
        if (w.tape() != this) throw std::invalid_argument("grad_taped: wrt tensor not on this tape");
        frontier[(static_cast<std::int64_t>(w.node()) << 8) | w.out_index()] = k;
    }

    const std::size_t n0 = nodes_.size();
    std::vector<std::vector<Tensor>> adj(n0);
    adj[loss.node()].resize(nodes_[loss.node()].outputs.size());
    adj[loss.node()][loss.out_index()] = Tensor::scalar(1.0);

    auto add_into = [&](const Tensor& target, const Tensor& contrib) {
        if (!target.on_tape() || target.node() >= static_cast<int>(n0)) return;
        auto& per_out = adj[target.node()];
        if (per_out.empty()) per_out.resize(nodes_[target.node()].outputs.size());
        Tensor& slot2 = per_out[target.out_index()];
        slot2 = slot2.defined() ? add(slot2, contrib) : contrib;
    };

    std::vector<Tensor> result(wrt.size());

    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(loss.node()); i >= 0; --i) {
        if (adj[i].empty()) continue;
        const Node& nd = nodes_[i];
        for (std::size_t oi = 0; oi < nd.outputs.size(); ++oi) {
            if (oi >= adj[i].size() || !adj[i][oi].defined()) continue;
            const Tensor G = adj[i][oi];
            auto f = frontier.find((static_cast<std::int64_t>(i) << 8) | static_cast<std::int64_t>(oi));
            if (f != frontier.end()) {
                result[f->second] = G;
                continue;  // do not propagate past the frontier
            }
            if (nd.kind == OpKind::Leaf || nd.kind == OpKind::StopGrad) continue;
            const std::vector<Tensor> in = nd.inputs;  // copy handles: emits below may grow nodes_
            const Tensor out = nd.outputs[oi];
            switch (nd.kind) {
                case OpKind::Add: {
                    const std::size_t n = out.numel();
                    add_into(in[0], in[0].numel() == 1 && n > 1 ? reduce_sum(G) : G);
                    add_into(in[1], in[1].numel() == 1 && n > 1 ? reduce_sum(G) : G);
                    break;
                }
                case OpKind::Sub: {
                    const std::size_t n = out.numel();
                    add_into(in[0], in[0].numel() == 1 && n > 1 ? reduce_sum(G) : G);
                    add_into(in[1], neg(in[1].numel() == 1 && n > 1 ? reduce_sum(G) : G));
                    break;
                }
                case OpKind::Mul: {
                    const std::size_t n = out.numel();
                    if (in[0].on_tape()) {
                        Tensor d = mul(G, in[1]);
                        add_into(in[0], in[0].numel() == 1 && n > 1 ? reduce_sum(d) : d);
                    }
                    if (in[1].on_tape()) {
                        Tensor d = mul(G, in[0]);
                        add_into(in[1], in[1].numel() == 1 && n > 1 ? reduce_sum(d) : d);
                    }
                    break;
                }
                case OpKind::Div: {
                    const std::size_t n = out.numel();
                    if (in[0].on_tape()) {
                        Tensor d = div(G, in[1]);
                        add_into(in[0], in[0].numel() == 1 && n > 1 ? reduce_sum(d) : d);
                    }
                    if (in[1].on_tape()) {
                        Tensor d = neg(mul(G, div(out, in[1])));
                        add_into(in[1], in[1].numel() == 1 && n > 1 ? reduce_sum(d) : d);
                    }
                    break;
                }
                case OpKind::Neg: add_into(in[0], neg(G)); break;
                case OpKind::Square: add_into(in[0], mul(G, mul(in[0], 2.0))); break;
                case OpKind::Sqrt: add_into(in[0], div(mul(G, 0.5), out)); break;
                case OpKind::Recip: add_into(in[0], neg(mul(G, square(out)))); break;
                case OpKind::Exp: add_into(in[0], mul(G, out)); break;
                case OpKind::Log: add_into(in[0], div(G, in[0])); break;
                case OpKind::Sigmoid: add_into(in[0], mul(G, mul(out, sub(1.0, out)))); break;
                case OpKind::Tanh: add_into(in[0], mul(G, sub(1.0, square(out)))); break;
                case OpKind::Relu: {
                    std::vector<double> mask(in[0].numel());
                    for (std::size_t j = 0; j < mask.size(); ++j)
                        mask[j] = in[0].data()[j] > 0.0 ? 1.0 : 0.0;
                    add_into(in[0], mul(G, Tensor::constant(in[0].shape(), std::move(mask))));
                    break;
                }
                case OpKind::Elu: {
                    std::vector<double> mask(in[0].numel());
                    for (std::size_t j = 0; j < mask.size(); ++j)
                        mask[j] = in[0].data()[j] > 0.0 ? 1.0 : 0.0;
                    Tensor m = Tensor::constant(in[0].shape(), std::move(mask));
                    // derivative: 1 above zero, elu(x)+1 below
                    Tensor d = add(m, mul(sub(1.0, m), add(out, 1.0)));
                    add_into(in[0], mul(G, d));
                    break;
                }
                case OpKind::MatMul: {
                    const bool ta = nd.attrs.trans_a, tb = nd.attrs.trans_b;
                    if (in[0].on_tape()) {
                        Tensor da = !ta ? matmul(G, in[1], false, !tb)
                                  : !tb ? matmul(in[1], G, false, true)
                                        : matmul(in[1], G, true, true);
                        add_into(in[0], da);
                    }
                    if (in[1].on_tape()) {
                        Tensor db = !tb ? matmul(in[0], G, !ta, false)
                                  : !ta ? matmul(G, in[0], true, false)
                                        : matmul(G, in[0], true, true);
                        add_into(in[1], db);
                    }
                    break;
                }
                case OpKind::AddRowVec: {
                    add_into(in[0], G);
                    if (in[1].on_tape()) {
                        Tensor ones_row = Tensor::full({1, out.rows()}, 1.0);
                        add_into(in[1], reshape(matmul(ones_row, G), {out.cols()}));
                    }
                    break;
                }
                case OpKind::ConcatCols: {
                    std::size_t off = 0;
                    for (const Tensor& part : in) {
                        if (part.on_tape()) add_into(part, slice_cols(G, off, part.cols()));
                        off += part.cols();
                    }
                    break;
                }
                case OpKind::SliceCols: {
                    if (in[0].on_tape()) {
                        const std::size_t start = nd.attrs.i0, len = nd.attrs.i1;
                        const std::size_t r = in[0].rows(), c = in[0].cols();
                        std::vector<Tensor> parts;
                        if (start > 0) parts.push_back(Tensor::zeros({r, start}));
                        parts.push_back(G);
                        if (start + len < c) parts.push_back(Tensor::zeros({r, c - start - len}));
                        add_into(in[0], parts.size() == 1 ? G : concat_cols(parts));
                    }
                    break;
                }
                case OpKind::Reshape: add_into(in[0], reshape(G, in[0].shape())); break;
                case OpKind::TileCols: add_into(in[0], row_sum(G)); break;
                case OpKind::RowSum: add_into(in[0], tile_cols(G, in[0].cols())); break;
                case OpKind::ReduceSum: add_into(in[0], mul(ones_like(in[0]), G)); break;
                case OpKind::ReduceMean:
                    add_into(in[0], mul(ones_like(in[0], 1.0 / static_cast<double>(in[0].numel())), G));
                    break;
                case OpKind::L2Norm: {
                    if (out.item() > 0.0) add_into(in[0], mul(in[0], div(G, out)));
                    break;
                }
                case OpKind::NormalizeL2: {
                    const double norm = nd.saved[0][0];
                    if (norm > 0.0) {
                        Tensor nt = l2_norm(in[0]);
                        Tensor proj = reduce_sum(mul(out, G));
                        // (G - out * <out, G>) / ||a||, kept differentiable
                        add_into(in[0], div(sub(G, mul(out, proj)), nt));
                    }
                    break;
                }
                case OpKind::SoftmaxRows: {
                    Tensor gp = mul(G, out);
                    add_into(in[0], mul(out, sub(G, tile_cols(row_sum(gp), out.cols()))));
                    break;
                }
                case OpKind::SoftmaxXent: {
                    Tensor p = softmax_rows(in[0]);
                    Tensor scale = mul(G, 1.0 / static_cast<double>(in[0].rows()));
                    add_into(in[0], mul(sub(p, in[1].detach()), scale));
                    break;
                }
                case OpKind::SquaredError: {
                    Tensor diff = sub(in[0], in[1]);
                    Tensor scale = mul(G, 2.0 / static_cast<double>(in[0].numel()));
                    if (in[0].on_tape()) add_into(in[0], mul(diff, scale));
                    if (in[1].on_tape()) add_into(in[1], neg(mul(diff, scale)));
                    break;
                }
                case OpKind::ClampMax: {
                    std::vector<double> mask(in[0].numel());
                    for (std::size_t j = 0; j < mask.size(); ++j)
                        mask[j] = in[0].data()[j] < nd.attrs.scalar ? 1.0 : 0.0;
                    add_into(in[0], mul(G, Tensor::constant(in[0].shape(), std::move(mask))));
                    break;
                }
                case OpKind::Custom:
                    throw std::runtime_error("grad_taped: differentiable backward is not defined for op '" +
                                             std::string(nd.custom->name()) + "'");
                default:
                    throw std::logic_error("grad_taped: unhandled op " + std::string(op_name(nd.kind)));
            }
        }
        adj[i].clear();
    }

    for (std::size_t k = 0; k < wrt.size(); ++k)
        if (!result[k].defined()) result[k] = Tensor::zeros(wrt[k].shape());
    return result;
}

}  // namespace optlab::ad
