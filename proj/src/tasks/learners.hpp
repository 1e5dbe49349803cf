#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ad/tensor.hpp"
#include "tasks/datasets.hpp"
#include "util/rng.hpp"

namespace optlab::tasks {

enum class Activation { Sigmoid, Relu, Elu, Tanh };
enum class Head { SoftmaxXent, Mse };

Activation parse_activation(const std::string& name);  // error on unknown names
std::string activation_name(Activation a);

// Feed-forward learner: hidden layers of equal width, one output head.
struct MlpSpec {
    std::size_t in_dim = 0;
    std::size_t hidden_layers = 1;
    std::size_t width = 20;
    std::size_t out_dim = 10;
    Activation activation = Activation::Sigmoid;
    Head head = Head::SoftmaxXent;
    double init_sigma = 0.1;  // Gaussian init scale; tables depend on it
};

MlpSpec build_mlp(std::size_t hidden_layers, std::size_t width, Activation act,
                  std::size_t in_dim, std::size_t out_dim, double init_sigma = 0.1);
std::size_t mlp_param_count(const MlpSpec& spec);
std::vector<double> mlp_init(const MlpSpec& spec, Rng& rng);
// w is the flat parameter vector; batch.x is (B x in_dim)
ad::Tensor mlp_forward(const MlpSpec& spec, const ad::Tensor& w, const ad::Tensor& x);
ad::Tensor mlp_loss(const MlpSpec& spec, const ad::Tensor& w, const Batch& batch);

// Sequence regressor: stacked LSTM over scalar inputs, linear head on the
// last hidden state, mean squared error.
struct LstmPredictorSpec {
    std::size_t layers = 1;  // 1 or 2
    std::size_t hidden = 20;
    std::size_t seq_len = 10;
    double init_sigma = 0.1;
};

LstmPredictorSpec build_lstm_predictor(std::size_t layers, std::size_t hidden = 20);
std::size_t lstm_param_count(const LstmPredictorSpec& spec);
std::vector<double> lstm_init(const LstmPredictorSpec& spec, Rng& rng);
ad::Tensor lstm_forward(const LstmPredictorSpec& spec, const ad::Tensor& w, const ad::Tensor& x);
ad::Tensor lstm_loss(const LstmPredictorSpec& spec, const ad::Tensor& w, const Batch& batch);

// A training problem: learner + optimizee + data stream. Batches are drawn
// from the task's own rng stream, one call per optimization step.
struct Task {
    std::string name;
    std::size_t dim = 0;
    std::function<std::vector<double>(Rng&)> init;
    std::function<Batch(std::size_t step, Rng&)> batch;
    std::function<ad::Tensor(const ad::Tensor& w, const Batch&)> loss;
};

Task make_mlp_task(std::shared_ptr<const Dataset> data, MlpSpec spec, std::size_t batch_size);
Task make_sine_task(LstmPredictorSpec spec, double noise_sigma, std::size_t batch_size);
// 0.5 * sum(scale_i * w_i^2) with condition number cond spread log-uniformly.
Task make_quadratic_task(std::size_t dim, double cond = 1.0);

}  // namespace optlab::tasks
