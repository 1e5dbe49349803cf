#include "ad/tensor.hpp"

namespace optlab::ad {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
    Tensor t;
    t.values_ = std::make_shared<std::vector<double>>(std::move(values));
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tensor::zeros(Shape shape) {
    return constant(shape, std::vector<double>(shape_numel(shape), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
    return constant(shape, std::vector<double>(shape_numel(shape), v));
}

}  // namespace optlab::ad
