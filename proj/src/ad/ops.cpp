#include "ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kernels/kernels.hpp"

namespace optlab::ad {

namespace {

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

void require_rank2(std::string_view op, const Tensor& t) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected a rank-2 tensor, got shape " +
                                    shape_str(t.shape()));
}

Tensor finish(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              Attrs attrs = {}, std::vector<std::vector<double>> saved = {}) {
    Tape* tape = common_tape(inputs);
    if (!tape) return Tensor::constant(std::move(shape), std::move(values));
    return tape->emit(kind, std::move(inputs), std::move(shape), std::move(values), attrs,
                      std::move(saved));
}

using MapFn = void (*)(const double*, double*, std::size_t);

Tensor unary(OpKind kind, const Tensor& a, MapFn fn) {
    std::vector<double> out(a.numel());
    fn(a.data(), out.data(), a.numel());
    return finish(kind, {a}, a.shape(), std::move(out));
}

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary(OpKind kind, BinKind bk, std::string_view name, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
    if (!a_scalar && !b_scalar && a.shape() != b.shape()) shape_error(name, a, b);
    const Shape& shape = a_scalar && !b_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(shape);
    std::vector<double> out(n);
    if (!a_scalar && !b_scalar) {
        switch (bk) {
            case BinKind::Add: kern::vadd(a.data(), b.data(), out.data(), n); break;
            case BinKind::Sub: kern::vsub(a.data(), b.data(), out.data(), n); break;
            case BinKind::Mul: kern::vmul(a.data(), b.data(), out.data(), n); break;
            case BinKind::Div: kern::vdiv(a.data(), b.data(), out.data(), n); break;
        }
    } else {
        const double* x = a.data();
        const double* y = b.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double xa = a_scalar ? x[0] : x[i];
            const double yb = b_scalar ? y[0] : y[i];
            switch (bk) {
                case BinKind::Add: out[i] = xa + yb; break;
                case BinKind::Sub: out[i] = xa - yb; break;
                case BinKind::Mul: out[i] = xa * yb; break;
                case BinKind::Div: out[i] = xa / yb; break;
            }
        }
    }
    return finish(kind, {a, b}, shape, std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::Add, BinKind::Add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::Sub, BinKind::Sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::Mul, BinKind::Mul, "mul", a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(OpKind::Div, BinKind::Div, "div", a, b); }

Tensor neg(const Tensor& a) { return unary(OpKind::Neg, a, kern::vneg); }
Tensor square(const Tensor& a) { return unary(OpKind::Square, a, kern::vsquare); }

Tensor sqrt(const Tensor& a) {
    for (double v : a.values())
        if (v < 0.0) throw std::domain_error("sqrt: negative input " + std::to_string(v));
    return unary(OpKind::Sqrt, a, kern::vsqrt);
}

Tensor reciprocal(const Tensor& a) { return unary(OpKind::Recip, a, kern::vrecip); }
Tensor exp(const Tensor& a) { return unary(OpKind::Exp, a, kern::vexp); }

Tensor log(const Tensor& a) {
    for (double v : a.values())
        if (v < 0.0) throw std::domain_error("log: negative input " + std::to_string(v));
    return unary(OpKind::Log, a, kern::vlog);
}

Tensor sigmoid(const Tensor& a) { return unary(OpKind::Sigmoid, a, kern::vsigmoid); }
Tensor tanh(const Tensor& a) { return unary(OpKind::Tanh, a, kern::vtanh); }
Tensor relu(const Tensor& a) { return unary(OpKind::Relu, a, kern::vrelu); }
Tensor elu(const Tensor& a) { return unary(OpKind::Elu, a, kern::velu); }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t ka = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (ka != kb) shape_error("matmul", a, b);
    std::vector<double> out(m * n);
    kern::matmul(trans_a, trans_b, m, ka, n, a.data(), b.data(), out.data());
    Attrs at;
    at.trans_a = trans_a;
    at.trans_b = trans_b;
    return finish(OpKind::MatMul, {a, b}, {m, n}, std::move(out), at);
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    require_rank2("add_rowvec", m);
    if (v.numel() != m.cols()) shape_error("add_rowvec", m, v);
    const std::size_t r = m.rows(), c = m.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.data()[i * c + j] + v.data()[j];
    return finish(OpKind::AddRowVec, {m, v}, m.shape(), std::move(out));
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t r = parts[0].rows();
    std::size_t ctot = 0;
    for (const Tensor& p : parts) {
        require_rank2("concat_cols", p);
        if (p.rows() != r) shape_error("concat_cols", parts[0], p);
        ctot += p.cols();
    }
    std::vector<double> out(r * ctot);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(p.data() + i * c, c, out.data() + i * ctot + off);
        off += c;
    }
    return finish(OpKind::ConcatCols, {parts.begin(), parts.end()}, {r, ctot}, std::move(out));
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    require_rank2("slice_cols", a);
    if (start + len > a.cols())
        throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") out of range for shape " +
                                    shape_str(a.shape()));
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * len);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a.data() + i * c + start, len, out.data() + i * len);
    Attrs at;
    at.i0 = start;
    at.i1 = len;
    return finish(OpKind::SliceCols, {a}, {r, len}, std::move(out), at);
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view shape " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    if (!a.on_tape()) {
        Tensor t = a.detach();
        return Tensor::constant(std::move(shape), t.values());
    }
    return a.tape()->emit_view(OpKind::Reshape, {a}, std::move(shape));
}

Tensor tile_cols(const Tensor& v, std::size_t n) {
    const std::size_t r = v.numel();
    std::vector<double> out(r * n);
    for (std::size_t i = 0; i < r; ++i) std::fill_n(out.data() + i * n, n, v.data()[i]);
    Attrs at;
    at.i0 = n;
    return finish(OpKind::TileCols, {v}, {r, n}, std::move(out), at);
}

Tensor row_sum(const Tensor& a) {
    require_rank2("row_sum", a);
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r);
    for (std::size_t i = 0; i < r; ++i) out[i] = kern::ref::sum(a.data() + i * c, c);
    return finish(OpKind::RowSum, {a}, {r}, std::move(out));
}

Tensor reduce_sum(const Tensor& a) {
    return finish(OpKind::ReduceSum, {a}, {1}, {kern::sum(a.data(), a.numel())});
}

Tensor reduce_mean(const Tensor& a) {
    return finish(OpKind::ReduceMean, {a}, {1},
                  {kern::sum(a.data(), a.numel()) / static_cast<double>(a.numel())});
}

Tensor l2_norm(const Tensor& a) {
    return finish(OpKind::L2Norm, {a}, {1}, {std::sqrt(kern::dot(a.data(), a.data(), a.numel()))});
}

Tensor normalize_l2(const Tensor& a) {
    const double norm = std::sqrt(kern::dot(a.data(), a.data(), a.numel()));
    std::vector<double> out(a.numel());
    if (norm > 0.0) kern::vscale(a.data(), 1.0 / norm, out.data(), a.numel());
    return finish(OpKind::NormalizeL2, {a}, a.shape(), std::move(out), {}, {{norm}});
}

namespace {

// rows of softmax(logits), shifted by the row max
void softmax_into(const Tensor& logits, std::vector<double>& probs) {
    const std::size_t r = logits.rows(), c = logits.cols();
    probs.resize(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = logits.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(row[j] - mx);
            denom += probs[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= denom;
    }
}

}  // namespace

Tensor softmax_rows(const Tensor& logits) {
    require_rank2("softmax_rows", logits);
    std::vector<double> probs;
    softmax_into(logits, probs);
    return finish(OpKind::SoftmaxRows, {logits}, logits.shape(), std::move(probs));
}

Tensor softmax_xent(const Tensor& logits, const Tensor& onehot) {
    require_rank2("softmax_xent", logits);
    if (logits.shape() != onehot.shape()) shape_error("softmax_xent", logits, onehot);
    const std::size_t r = logits.rows(), c = logits.cols();
    std::vector<double> probs;
    softmax_into(logits, probs);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = logits.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        double dot_y = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot_y += onehot.data()[i * c + j] * row[j];
        total += lse - dot_y;
    }
    return finish(OpKind::SoftmaxXent, {logits, onehot}, {1}, {total / static_cast<double>(r)}, {},
                  {std::move(probs)});
}

Tensor squared_error(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) shape_error("squared_error", pred, target);
    const std::size_t n = pred.numel();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.data()[i] - target.data()[i];
        total += d * d;
    }
    return finish(OpKind::SquaredError, {pred, target}, {1}, {total / static_cast<double>(n)});
}

Tensor clamp_max(const Tensor& a, double cap) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = std::min(a.data()[i], cap);
    Attrs at;
    at.scalar = cap;
    return finish(OpKind::ClampMax, {a}, a.shape(), std::move(out), at);
}

Tensor stop_gradient(const Tensor& a) { return a.detach(); }

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    auto g = [&f](std::span<const Tensor> xs) { return f(xs[0]); };
    const Tensor xs[] = {x};
    return grad_check(g, xs, h);
}

double grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                  std::span<const Tensor> xs, double h) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(xs.size());
    for (const Tensor& x : xs) leaves.push_back(tape.leaf(x.detach()));
    Tensor loss = f(leaves);
    if (loss.numel() != 1)
        throw std::invalid_argument("grad_check: function must return a scalar");
    GradientMap grads = tape.backward(loss);

    double worst = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Tensor analytic = grads.grad_of(leaves[k]);
        std::vector<Tensor> probe;
        for (const Tensor& x : xs) probe.push_back(x.detach());
        std::vector<double> base = xs[k].values();
        for (std::size_t i = 0; i < base.size(); ++i) {
            std::vector<double> lo = base, hi = base;
            lo[i] -= h;
            hi[i] += h;
            probe[k] = Tensor::constant(xs[k].shape(), hi);
            const double fp = f(probe).item();
            probe[k] = Tensor::constant(xs[k].shape(), lo);
            const double fm = f(probe).item();
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic.data()[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
        probe[k] = xs[k].detach();
    }
    return worst;
}

}  // namespace optlab::ad
