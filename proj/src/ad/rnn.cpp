#include "ad/rnn.hpp"

#include <cmath>
#include <stdexcept>

#include "kernels/kernels.hpp"

namespace optlab::ad {

namespace {

class LstmCellOp final : public CustomOp {
public:
    std::string_view name() const override { return "lstm_cell"; }

    void backward(const Node& nd, std::span<const std::vector<double>*> out_adj,
                  std::span<std::vector<double>*> in_adj) const override {
        const Tensor& x = nd.inputs[0];
        const Tensor& h = nd.inputs[1];
        const Tensor& c = nd.inputs[2];
        const Tensor& wx = nd.inputs[3];
        const Tensor& wh = nd.inputs[4];
        const std::size_t r = x.rows(), d = x.cols(), nh = h.cols();
        const std::size_t n = r * nh;

        const std::vector<double>& gi = nd.saved[0];
        const std::vector<double>& gf = nd.saved[1];
        const std::vector<double>& gg = nd.saved[2];
        const std::vector<double>& go = nd.saved[3];
        const double* c_new = nd.outputs[1].data();

        std::vector<double> dz(r * 4 * nh);  // pre-activation adjoints, packed
        for (std::size_t row = 0; row < r; ++row) {
            const std::size_t o1 = row * nh;
            const std::size_t oz = row * 4 * nh;
            for (std::size_t j = 0; j < nh; ++j) {
                const std::size_t idx = o1 + j;
                const double tc = std::tanh(c_new[idx]);
                const double gh = out_adj[0] ? (*out_adj[0])[idx] : 0.0;
                const double gc_ext = out_adj[1] ? (*out_adj[1])[idx] : 0.0;
                const double dout = gh * tc;
                const double dc_tot = gc_ext + gh * go[idx] * (1.0 - tc * tc);
                const double dfg = dc_tot * c.data()[idx];
                const double din = dc_tot * gg[idx];
                const double dgg = dc_tot * gi[idx];
                if (in_adj[2]) (*in_adj[2])[idx] += dc_tot * gf[idx];
                dz[oz + j] = din * gi[idx] * (1.0 - gi[idx]);
                dz[oz + nh + j] = dfg * gf[idx] * (1.0 - gf[idx]);
                dz[oz + 2 * nh + j] = dgg * (1.0 - gg[idx] * gg[idx]);
                dz[oz + 3 * nh + j] = dout * go[idx] * (1.0 - go[idx]);
            }
        }
        (void)n;
        if (in_adj[0]) kern::matmul(false, true, r, 4 * nh, d, dz.data(), wx.data(), in_adj[0]->data(), true);
        if (in_adj[1]) kern::matmul(false, true, r, 4 * nh, nh, dz.data(), wh.data(), in_adj[1]->data(), true);
        if (in_adj[3]) kern::matmul(true, false, d, r, 4 * nh, x.data(), dz.data(), in_adj[3]->data(), true);
        if (in_adj[4]) kern::matmul(true, false, nh, r, 4 * nh, h.data(), dz.data(), in_adj[4]->data(), true);
        if (in_adj[5]) {
            for (std::size_t row = 0; row < r; ++row)
                for (std::size_t j = 0; j < 4 * nh; ++j) (*in_adj[5])[j] += dz[row * 4 * nh + j];
        }
    }
};

const LstmCellOp kLstmCellOp;

}  // namespace

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const Tensor& wx, const Tensor& wh, const Tensor& b) {
    const std::size_t r = x.rows(), d = x.cols(), nh = h.cols();
    if (h.rows() != r || c.rows() != r || c.cols() != nh || wx.rows() != d || wx.cols() != 4 * nh ||
        wh.rows() != nh || wh.cols() != 4 * nh || b.numel() != 4 * nh)
        throw std::invalid_argument("lstm_cell: inconsistent shapes, x " + shape_str(x.shape()) +
                                    " h " + shape_str(h.shape()) + " wx " + shape_str(wx.shape()));

    std::vector<double> z(r * 4 * nh);
    for (std::size_t row = 0; row < r; ++row)
        for (std::size_t j = 0; j < 4 * nh; ++j) z[row * 4 * nh + j] = b.data()[j];
    kern::matmul(false, false, r, d, 4 * nh, x.data(), wx.data(), z.data(), true);
    kern::matmul(false, false, r, nh, 4 * nh, h.data(), wh.data(), z.data(), true);

    std::vector<double> gi(r * nh), gf(r * nh), gg(r * nh), go(r * nh);
    std::vector<double> h_new(r * nh), c_new(r * nh);
    const bool par = kern::parallel_enabled() && r >= 256;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t row = 0; row < static_cast<std::ptrdiff_t>(r); ++row) {
        const std::size_t oz = row * 4 * nh;
        const std::size_t o1 = row * nh;
        for (std::size_t j = 0; j < nh; ++j) {
            const double zi = z[oz + j];
            const double zf = z[oz + nh + j];
            const double zg = z[oz + 2 * nh + j];
            const double zo = z[oz + 3 * nh + j];
            const double i_g = 1.0 / (1.0 + std::exp(-zi));
            const double f_g = 1.0 / (1.0 + std::exp(-zf));
            const double g_g = std::tanh(zg);
            const double o_g = 1.0 / (1.0 + std::exp(-zo));
            const double cn = f_g * c.data()[o1 + j] + i_g * g_g;
            gi[o1 + j] = i_g;
            gf[o1 + j] = f_g;
            gg[o1 + j] = g_g;
            go[o1 + j] = o_g;
            c_new[o1 + j] = cn;
            h_new[o1 + j] = o_g * std::tanh(cn);
        }
    }

    std::vector<Tensor> inputs{x, h, c, wx, wh, b};
    Tape* tape = common_tape(inputs);
    if (!tape) {
        return {Tensor::constant({r, nh}, std::move(h_new)),
                Tensor::constant({r, nh}, std::move(c_new))};
    }
    std::vector<Tensor> outs = tape->emit_multi(
        OpKind::Custom, std::move(inputs), {{r, nh}, {r, nh}},
        {std::move(h_new), std::move(c_new)}, {},
        {std::move(gi), std::move(gf), std::move(gg), std::move(go)}, &kLstmCellOp);
    return {outs[0], outs[1]};
}

}  // namespace optlab::ad
