#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ad/tensor.hpp"

namespace optlab::ad {

enum class OpKind : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Square,
    Sqrt,
    Recip,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Relu,
    Elu,
    MatMul,
    AddRowVec,
    ConcatCols,
    SliceCols,
    Reshape,
    TileCols,
    RowSum,
    ReduceSum,
    ReduceMean,
    L2Norm,
    NormalizeL2,
    SoftmaxRows,
    SoftmaxXent,
    SquaredError,
    ClampMax,
    StopGrad,
    Custom,
};

std::string_view op_name(OpKind k);

struct Attrs {
    double scalar = 0.0;  // clamp cap, epsilon, ...
    std::size_t i0 = 0;   // slice start / tile count
    std::size_t i1 = 0;   // slice length
    bool trans_a = false;
    bool trans_b = false;
};

struct Node;

// Fused operations (the recurrent optimizer cells) plug into the tape
// through this interface: forward code builds the node, backward dispatches
// here. out_adj entries may be null when an output never influenced the
// loss; in_adj entries are null for constant inputs.
class CustomOp {
public:
    virtual ~CustomOp() = default;
    virtual std::string_view name() const = 0;
    virtual void backward(const Node& node, std::span<const std::vector<double>*> out_adj,
                          std::span<std::vector<double>*> in_adj) const = 0;
};

struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;   // constants keep node() == -1
    std::vector<Tensor> outputs;  // usually one
    Attrs attrs;
    std::vector<std::vector<double>> saved;  // extra buffers for backward
    const CustomOp* custom = nullptr;
};

// Map from tape nodes to gradient buffers, produced by Tape::backward.
class GradientMap {
public:
    // Gradient of the loss w.r.t. t; zeros when t is detached or unused.
    Tensor grad_of(const Tensor& t) const;
    bool has(const Tensor& t) const;

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    // keyed by node id; only nodes reached by the backward sweep appear
    std::unordered_map<int, std::vector<double>> grads_;
};

// Record of one computation. Confined to a single thread; independent tapes
// may run concurrently. Recording is append-only and backward never mutates
// the tape, so repeated backward calls over the same tape are identical.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // A differentiable variable holding the given values.
    Tensor leaf(Shape shape, std::vector<double> values);
    Tensor leaf(const Tensor& constant_like);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::size_t i) const { return nodes_[i]; }
    void clear() { nodes_.clear(); }

    // Reverse sweep from a scalar loss. Plain buffers, nothing recorded.
    GradientMap backward(const Tensor& loss) const;

    // Reverse sweep expressed with tensor operations, recorded back onto
    // this tape, so the returned gradients are themselves differentiable.
    // Adjoints are not propagated through the wrt tensors (they act as the
    // differentiation frontier). Supported for primitive ops only.
    std::vector<Tensor> grad_taped(const Tensor& loss, std::span<const Tensor> wrt);

    // --- recording interface (used by the ops layer and custom ops) ---
    Tensor emit(OpKind kind, std::vector<Tensor> inputs, Shape out_shape,
                std::vector<double> out_values, Attrs attrs = {},
                std::vector<std::vector<double>> saved = {});
    // emit with an output aliasing existing storage (reshape)
    Tensor emit_view(OpKind kind, std::vector<Tensor> inputs, Shape out_shape, Attrs attrs = {});
    std::vector<Tensor> emit_multi(OpKind kind, std::vector<Tensor> inputs,
                                   std::vector<Shape> out_shapes,
                                   std::vector<std::vector<double>> out_values, Attrs attrs,
                                   std::vector<std::vector<double>> saved,
                                   const CustomOp* custom = nullptr);

private:
    friend class GradientMap;
    void backward_node(std::size_t i, std::vector<std::vector<std::vector<double>>>& adj) const;

    // deque: node references stay valid while grad_taped appends
    std::deque<Node> nodes_;
};

// Returns the tape shared by the given tensors, or nullptr if all are
// constants. Mixing two different tapes is an error.
Tape* common_tape(std::span<const Tensor> ts);

}  // namespace optlab::ad
