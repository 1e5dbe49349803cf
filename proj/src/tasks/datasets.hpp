#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ad/tensor.hpp"
#include "util/rng.hpp"

namespace optlab::tasks {

// One minibatch, held as detached tensors. Tasks without data (quadratics)
// leave both tensors undefined.
struct Batch {
    ad::Tensor x;
    ad::Tensor y;
};

struct Dataset {
    std::string name;
    std::size_t n = 0;  // examples
    std::size_t d = 0;  // input width
    std::size_t b = 0;  // target width
    std::vector<double> inputs;   // n x d
    std::vector<double> targets;  // n x b
};

// IDX files (big-endian): magic 0x00000803 with 28x28 images flattened to
// 784 and scaled to [0,1]; labels magic 0x00000801, one-hot 10. Parse errors
// carry the byte offset.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Offline stand-in for MNIST: `classes` Gaussian clusters in d dimensions.
// The first `classes` coordinates carry the class signal (unit one-hot
// centers plus noise truncated tightly enough that a margin-0.5 linear
// separator exists by construction); the rest is background noise around a
// seed-deterministic cluster offset. Labels are assigned round-robin, so
// class counts are balanced to +-1.
Dataset gen_synthetic_classification(std::uint64_t seed, std::size_t n, std::size_t d,
                                     std::size_t classes, double background_sigma = 0.3);

// Uniform sample of nb examples without replacement within the batch.
Batch sample_batch(const Dataset& ds, std::size_t nb, Rng& rng);

// Sequence-prediction stream: rows are f(0..9) with additive N(0, noise_sigma^2)
// noise, the target is the noiseless f(10), where f(x) = A sin(wx + phi),
// A ~ U(0,10), w ~ U(0, pi/2), phi ~ U(0, 2pi).
Batch sample_sine_batch(std::size_t nb, double noise_sigma, Rng& rng);

}  // namespace optlab::tasks
