#include "tasks/learners.hpp"

#include <cmath>
#include <stdexcept>

#include "ad/ops.hpp"
#include "ad/rnn.hpp"

namespace optlab::tasks {

using ad::Tensor;

Activation parse_activation(const std::string& name) {
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "relu") return Activation::Relu;
    if (name == "elu") return Activation::Elu;
    if (name == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + name +
                                "' (expected sigmoid|relu|elu|tanh)");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Relu: return "relu";
        case Activation::Elu: return "elu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

namespace {

Tensor apply_activation(Activation a, const Tensor& t) {
    switch (a) {
        case Activation::Sigmoid: return ad::sigmoid(t);
        case Activation::Relu: return ad::relu(t);
        case Activation::Elu: return ad::elu(t);
        case Activation::Tanh: return ad::tanh(t);
    }
    throw std::logic_error("bad activation");
}

// Walks a flat parameter vector, handing out reshaped pieces.
class ParamCursor {
public:
    explicit ParamCursor(const Tensor& w) : row_(ad::reshape(w, {1, w.numel()})) {}

    Tensor matrix(std::size_t r, std::size_t c) {
        Tensor t = ad::reshape(ad::slice_cols(row_, off_, r * c), {r, c});
        off_ += r * c;
        return t;
    }

    Tensor vector(std::size_t n) {
        Tensor t = ad::reshape(ad::slice_cols(row_, off_, n), {n});
        off_ += n;
        return t;
    }

    std::size_t consumed() const { return off_; }

private:
    Tensor row_;
    std::size_t off_ = 0;
};

std::vector<std::size_t> mlp_widths(const MlpSpec& spec) {
    std::vector<std::size_t> w{spec.in_dim};
    for (std::size_t i = 0; i < spec.hidden_layers; ++i) w.push_back(spec.width);
    w.push_back(spec.out_dim);
    return w;
}

}  // namespace

MlpSpec build_mlp(std::size_t hidden_layers, std::size_t width, Activation act,
                  std::size_t in_dim, std::size_t out_dim, double init_sigma) {
    if (hidden_layers < 1 || hidden_layers > 10)
        throw std::invalid_argument("build_mlp: hidden layer count " +
                                    std::to_string(hidden_layers) + " outside [1,10]");
    if (width == 0 || in_dim == 0 || out_dim == 0)
        throw std::invalid_argument("build_mlp: zero width");
    MlpSpec spec;
    spec.in_dim = in_dim;
    spec.hidden_layers = hidden_layers;
    spec.width = width;
    spec.out_dim = out_dim;
    spec.activation = act;
    spec.head = Head::SoftmaxXent;
    spec.init_sigma = init_sigma;
    return spec;
}

std::size_t mlp_param_count(const MlpSpec& spec) {
    const auto widths = mlp_widths(spec);
    std::size_t p = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) p += widths[i] * widths[i + 1] + widths[i + 1];
    return p;
}

std::vector<double> mlp_init(const MlpSpec& spec, Rng& rng) {
    std::vector<double> w(mlp_param_count(spec));
    for (double& v : w) v = rng.normal(0.0, spec.init_sigma);
    return w;
}

Tensor mlp_forward(const MlpSpec& spec, const Tensor& w, const Tensor& x) {
    const auto widths = mlp_widths(spec);
    ParamCursor cur(w);
    Tensor h = x;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Tensor wi = cur.matrix(widths[i], widths[i + 1]);
        Tensor bi = cur.vector(widths[i + 1]);
        h = ad::add_rowvec(ad::matmul(h, wi), bi);
        if (i + 2 < widths.size()) h = apply_activation(spec.activation, h);
    }
    return h;  // logits / raw head output
}

Tensor mlp_loss(const MlpSpec& spec, const Tensor& w, const Batch& batch) {
    Tensor out = mlp_forward(spec, w, batch.x);
    return spec.head == Head::SoftmaxXent ? ad::softmax_xent(out, batch.y)
                                          : ad::squared_error(out, batch.y);
}

LstmPredictorSpec build_lstm_predictor(std::size_t layers, std::size_t hidden) {
    if (layers != 1 && layers != 2)
        throw std::invalid_argument("build_lstm_predictor: layers must be 1 or 2");
    LstmPredictorSpec spec;
    spec.layers = layers;
    spec.hidden = hidden;
    return spec;
}

std::size_t lstm_param_count(const LstmPredictorSpec& spec) {
    std::size_t p = 0;
    std::size_t in = 1;
    for (std::size_t l = 0; l < spec.layers; ++l) {
        p += in * 4 * spec.hidden + spec.hidden * 4 * spec.hidden + 4 * spec.hidden;
        in = spec.hidden;
    }
    return p + spec.hidden + 1;  // linear head
}

std::vector<double> lstm_init(const LstmPredictorSpec& spec, Rng& rng) {
    std::vector<double> w(lstm_param_count(spec));
    for (double& v : w) v = rng.normal(0.0, spec.init_sigma);
    return w;
}

Tensor lstm_forward(const LstmPredictorSpec& spec, const Tensor& w, const Tensor& x) {
    const std::size_t batch = x.rows(), steps = x.cols(), nh = spec.hidden;
    ParamCursor cur(w);
    struct Layer {
        Tensor wx, wh, b;
    };
    std::vector<Layer> layers;
    std::size_t in = 1;
    for (std::size_t l = 0; l < spec.layers; ++l) {
        Layer lay;
        lay.wx = cur.matrix(in, 4 * nh);
        lay.wh = cur.matrix(nh, 4 * nh);
        lay.b = cur.vector(4 * nh);
        layers.push_back(lay);
        in = nh;
    }
    Tensor head_w = cur.matrix(nh, 1);
    Tensor head_b = cur.vector(1);

    std::vector<Tensor> h(spec.layers), c(spec.layers);
    for (std::size_t l = 0; l < spec.layers; ++l) {
        h[l] = Tensor::zeros({batch, nh});
        c[l] = Tensor::zeros({batch, nh});
    }
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor input = ad::slice_cols(x, t, 1);  // batch x 1
        for (std::size_t l = 0; l < spec.layers; ++l) {
            auto [hn, cn] = ad::lstm_cell(input, h[l], c[l], layers[l].wx, layers[l].wh, layers[l].b);
            h[l] = hn;
            c[l] = cn;
            input = hn;
        }
    }
    return ad::add_rowvec(ad::matmul(h[spec.layers - 1], head_w), head_b);  // batch x 1
}

Tensor lstm_loss(const LstmPredictorSpec& spec, const Tensor& w, const Batch& batch) {
    return ad::squared_error(lstm_forward(spec, w, batch.x), batch.y);
}

Task make_mlp_task(std::shared_ptr<const Dataset> data, MlpSpec spec, std::size_t batch_size) {
    if (!data || data->n == 0) throw std::invalid_argument("make_mlp_task: empty dataset");
    if (spec.in_dim != data->d || spec.out_dim != data->b)
        throw std::invalid_argument("make_mlp_task: learner " + std::to_string(spec.in_dim) + "->" +
                                    std::to_string(spec.out_dim) + " does not fit dataset " +
                                    std::to_string(data->d) + "->" + std::to_string(data->b));
    Task task;
    task.name = "mlp" + std::to_string(spec.hidden_layers) + "-" + activation_name(spec.activation) +
                "-" + data->name;
    task.dim = mlp_param_count(spec);
    task.init = [spec](Rng& rng) { return mlp_init(spec, rng); };
    task.batch = [data, batch_size](std::size_t, Rng& rng) {
        return sample_batch(*data, batch_size, rng);
    };
    task.loss = [spec](const Tensor& w, const Batch& b) { return mlp_loss(spec, w, b); };
    return task;
}

Task make_sine_task(LstmPredictorSpec spec, double noise_sigma, std::size_t batch_size) {
    Task task;
    task.name = "sine-lstm" + std::to_string(spec.layers) + (noise_sigma <= 0.01 ? "-smallnoise" : "");
    task.dim = lstm_param_count(spec);
    task.init = [spec](Rng& rng) { return lstm_init(spec, rng); };
    task.batch = [noise_sigma, batch_size](std::size_t, Rng& rng) {
        return sample_sine_batch(batch_size, noise_sigma, rng);
    };
    task.loss = [spec](const Tensor& w, const Batch& b) { return lstm_loss(spec, w, b); };
    return task;
}

Task make_quadratic_task(std::size_t dim, double cond) {
    if (dim == 0 || cond < 1.0) throw std::invalid_argument("make_quadratic_task: bad arguments");
    std::vector<double> scales(dim);
    for (std::size_t i = 0; i < dim; ++i)
        scales[i] = dim == 1 ? 1.0 : std::pow(cond, double(i) / double(dim - 1));
    Tensor scale_t = ad::Tensor::constant({dim}, std::move(scales));

    Task task;
    task.name = "quadratic" + std::to_string(dim) + (cond > 1.0 ? "-ill" : "");
    task.dim = dim;
    task.init = [dim](Rng& rng) {
        std::vector<double> w(dim);
        for (double& v : w) v = rng.normal(0.0, 1.0);
        return w;
    };
    task.batch = [](std::size_t, Rng&) { return Batch{}; };
    task.loss = [scale_t](const Tensor& w, const Batch&) {
        return ad::mul(ad::reduce_sum(ad::mul(scale_t, ad::square(w))), 0.5);
    };
    return task;
}

}  // namespace optlab::tasks
