#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tasks/learners.hpp"

namespace optlab::opt {

// Throws std::runtime_error naming the first offending coordinate.
void check_finite(std::span<const double> g, const char* who);

// --- pure step rules over explicit state -----------------------------------
// Every step function returns the update vector to *subtract* from the
// parameters and advances the state by exactly one step; no hidden state.

struct AdamHyper {
    double alpha = 0.001;
    double beta = 0.9;    // first-moment decay
    double gamma = 0.999; // second-moment decay
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    static AdamState zeros(std::size_t p) { return {std::vector<double>(p, 0.0), std::vector<double>(p, 0.0), 0}; }
};

// m' = b m + (1-b) g; v' = c v + (1-c) g^2; bias-corrected by 1 - decay^t;
// update = alpha * m_hat / (sqrt(v_hat) + eps), with eps outside the root.
AdamState adam_step(const AdamState& s, std::span<const double> g, const AdamHyper& h,
                    std::vector<double>& update);

struct SgdHyper {
    double alpha = 0.01;
};
void sgd_step(std::span<const double> g, const SgdHyper& h, std::vector<double>& update);

struct MomentumHyper {
    double alpha = 0.01;
    double mu = 0.9;
};
struct MomentumState {
    std::vector<double> v;
    static MomentumState zeros(std::size_t p) { return {std::vector<double>(p, 0.0)}; }
};
MomentumState momentum_step(const MomentumState& s, std::span<const double> g,
                            const MomentumHyper& h, std::vector<double>& update);

struct RmsPropHyper {
    double alpha = 0.01;
    double decay = 0.9;
    double eps = 1e-8;
};
struct RmsPropState {
    std::vector<double> sq;
    static RmsPropState zeros(std::size_t p) { return {std::vector<double>(p, 0.0)}; }
};
RmsPropState rmsprop_step(const RmsPropState& s, std::span<const double> g, const RmsPropHyper& h,
                          std::vector<double>& update);

struct AdaGradHyper {
    double alpha = 0.01;
    double eps = 1e-8;
};
struct AdaGradState {
    std::vector<double> accum;
    static AdaGradState zeros(std::size_t p) { return {std::vector<double>(p, 0.0)}; }
};
AdaGradState adagrad_step(const AdaGradState& s, std::span<const double> g, const AdaGradHyper& h,
                          std::vector<double>& update);

struct AdaDeltaHyper {
    double alpha = 1.0;  // final rescale; the classic rule uses 1
    double rho = 0.95;
    double eps = 1e-6;
};
struct AdaDeltaState {
    std::vector<double> sq_g, sq_d;
    static AdaDeltaState zeros(std::size_t p) {
        return {std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
    }
};
AdaDeltaState adadelta_step(const AdaDeltaState& s, std::span<const double> g,
                            const AdaDeltaHyper& h, std::vector<double>& update);

// --- stateful adapter for benchmark runs ------------------------------------

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual std::string name() const = 0;
    // gradient in, update out (caller subtracts); called once per step
    virtual std::vector<double> step(std::span<const double> g) = 0;
};

using OptimizerFactory = std::function<std::unique_ptr<Optimizer>(std::size_t dim)>;

OptimizerFactory make_sgd(SgdHyper h);
OptimizerFactory make_momentum(MomentumHyper h);
OptimizerFactory make_rmsprop(RmsPropHyper h);
OptimizerFactory make_adagrad(AdaGradHyper h);
OptimizerFactory make_adadelta(AdaDeltaHyper h);
OptimizerFactory make_adam(AdamHyper h);

// --- trajectory runner -------------------------------------------------------

struct RunTrace {
    std::vector<double> losses;  // loss after each applied step, length <= T
    bool diverged = false;
    std::uint64_t seed = 0;
    double wall_ms = 0.0;
    std::vector<double> final_params;
};

inline constexpr double kDivergenceThreshold = 1e8;

// T steps of `optimizer` on `task`: per step draw a batch, take the gradient
// at the current parameters, apply the update, and record the loss at the
// *updated* parameters on the same batch. A non-finite or >1e8 loss truncates
// the trace and flags divergence (a reportable outcome, not an error).
RunTrace run_optimizer(const tasks::Task& task, Optimizer& optimizer, std::size_t steps,
                       std::uint64_t seed);

}  // namespace optlab::opt
