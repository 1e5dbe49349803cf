#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace optlab::ad {

class Tape;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major array of doubles, optionally attached to a Tape node.
// A Tensor with no tape is a constant: operations on constants compute
// values without recording anything, and constants contribute zero to
// every gradient. Values are shared (copy-on-nothing); tensors are never
// mutated after construction except through raw() during initial fill.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor scalar(double v) { return constant({1}, {v}); }
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);

    bool defined() const { return static_cast<bool>(values_); }
    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return values_ ? values_->size() : 0; }
    std::size_t rank() const { return shape_.size(); }
    // rank-2 accessors; rank-1 tensors count as a single column
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() >= 2 ? shape_[1] : 1; }

    const std::vector<double>& values() const { return *values_; }
    const double* data() const { return values_->data(); }
    double* raw() { return values_->data(); }

    double item() const {
        if (numel() != 1) throw std::invalid_argument("item: tensor is not a scalar, shape " + shape_str(shape_));
        return (*values_)[0];
    }

    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    int out_index() const { return out_idx_; }

    // Same values (shared), no tape attachment.
    Tensor detach() const {
        Tensor t;
        t.values_ = values_;
        t.shape_ = shape_;
        return t;
    }

private:
    std::shared_ptr<std::vector<double>> values_;
    Shape shape_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    int out_idx_ = 0;

    friend class Tape;
};

}  // namespace optlab::ad
