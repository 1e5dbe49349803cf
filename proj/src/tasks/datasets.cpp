#include "tasks/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace optlab::tasks {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t& offset) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (!f)
        throw std::runtime_error(path + ": truncated at byte " + std::to_string(offset));
    offset += 4;
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("cannot open " + images_path);
    std::size_t off = 0;
    const std::uint32_t img_magic = read_be32(imgs, images_path, off);
    if (img_magic != 0x00000803)
        throw std::runtime_error(images_path + ": bad image magic at byte 0, got " +
                                 std::to_string(img_magic));
    const std::uint32_t n = read_be32(imgs, images_path, off);
    const std::uint32_t rows = read_be32(imgs, images_path, off);
    const std::uint32_t cols = read_be32(imgs, images_path, off);
    if (rows != 28 || cols != 28)
        throw std::runtime_error(images_path + ": expected 28x28 images, got " +
                                 std::to_string(rows) + "x" + std::to_string(cols));

    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw std::runtime_error("cannot open " + labels_path);
    std::size_t loff = 0;
    const std::uint32_t lbl_magic = read_be32(lbls, labels_path, loff);
    if (lbl_magic != 0x00000801)
        throw std::runtime_error(labels_path + ": bad label magic at byte 0, got " +
                                 std::to_string(lbl_magic));
    const std::uint32_t ln = read_be32(lbls, labels_path, loff);
    if (ln != n)
        throw std::runtime_error("image/label count mismatch: " + std::to_string(n) + " images vs " +
                                 std::to_string(ln) + " labels");

    Dataset ds;
    ds.name = "mnist";
    ds.n = n;
    ds.d = 784;
    ds.b = 10;
    ds.inputs.resize(std::size_t(n) * 784);
    ds.targets.assign(std::size_t(n) * 10, 0.0);

    std::vector<unsigned char> pix(784);
    for (std::uint32_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(pix.data()), 784);
        if (!imgs)
            throw std::runtime_error(images_path + ": truncated at byte " + std::to_string(off));
        off += 784;
        for (std::size_t j = 0; j < 784; ++j)
            ds.inputs[std::size_t(i) * 784 + j] = pix[j] / 255.0;
        unsigned char lab;
        lbls.read(reinterpret_cast<char*>(&lab), 1);
        if (!lbls)
            throw std::runtime_error(labels_path + ": truncated at byte " + std::to_string(loff));
        loff += 1;
        if (lab > 9)
            throw std::runtime_error(labels_path + ": label " + std::to_string(int(lab)) +
                                     " out of range at byte " + std::to_string(loff - 1));
        ds.targets[std::size_t(i) * 10 + lab] = 1.0;
    }
    return ds;
}

Dataset gen_synthetic_classification(std::uint64_t seed, std::size_t n, std::size_t d,
                                     std::size_t classes, double background_sigma) {
    if (classes < 2 || d < classes)
        throw std::invalid_argument("gen_synthetic_classification: need d >= classes >= 2");
    if (n < classes) throw std::invalid_argument("gen_synthetic_classification: need n >= classes");
    Rng rng(seed);

    // Signal-coordinate noise bound keeping the one-hot centers separable
    // with margin >= 0.5: worst-case projection of the bounded noise onto a
    // between-centers direction is b*sqrt(2), and the mid-hyperplane sits at
    // distance 1/sqrt(2) from each center.
    const double b_sig = 0.14;

    Dataset ds;
    ds.name = "synthetic";
    ds.n = n;
    ds.d = d;
    ds.b = classes;
    ds.inputs.resize(n * d);
    ds.targets.assign(n * classes, 0.0);

    // seed-deterministic per-class offsets in the background coordinates
    std::vector<double> centers(classes * d, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        centers[c * d + c] = 1.0;
        for (std::size_t j = classes; j < d; ++j) centers[c * d + j] = rng.normal(0.0, 0.1);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;  // round-robin: balanced to +-1
        ds.targets[i * classes + c] = 1.0;
        double* row = ds.inputs.data() + i * d;
        for (std::size_t j = 0; j < classes; ++j)
            row[j] = centers[c * d + j] + rng.truncated_normal(b_sig / 2.0, 2.0);
        for (std::size_t j = classes; j < d; ++j)
            row[j] = centers[c * d + j] + rng.normal(0.0, background_sigma);
    }
    return ds;
}

Batch sample_batch(const Dataset& ds, std::size_t nb, Rng& rng) {
    if (nb > ds.n)
        throw std::invalid_argument("sample_batch: batch " + std::to_string(nb) +
                                    " exceeds dataset size " + std::to_string(ds.n));
    // partial Fisher-Yates: exactly nb rng draws, no replacement within batch
    std::vector<std::uint32_t> idx(ds.n);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> x(nb * ds.d), y(nb * ds.b);
    for (std::size_t i = 0; i < nb; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(ds.n - i));
        std::swap(idx[i], idx[j]);
        const std::size_t src = idx[i];
        std::copy_n(ds.inputs.data() + src * ds.d, ds.d, x.data() + i * ds.d);
        std::copy_n(ds.targets.data() + src * ds.b, ds.b, y.data() + i * ds.b);
    }
    return {ad::Tensor::constant({nb, ds.d}, std::move(x)),
            ad::Tensor::constant({nb, ds.b}, std::move(y))};
}

Batch sample_sine_batch(std::size_t nb, double noise_sigma, Rng& rng) {
    if (noise_sigma < 0.0) throw std::invalid_argument("sample_sine_batch: negative noise sigma");
    std::vector<double> x(nb * 10), y(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        const double amp = rng.uniform(0.0, 10.0);
        const double w = rng.uniform(0.0, kPi / 2.0);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        for (std::size_t t = 0; t < 10; ++t)
            x[i * 10 + t] = amp * std::sin(w * double(t) + phi) +
                            (noise_sigma > 0.0 ? rng.normal(0.0, noise_sigma) : 0.0);
        y[i] = amp * std::sin(10.0 * w + phi);
    }
    return {ad::Tensor::constant({nb, 10}, std::move(x)),
            ad::Tensor::constant({nb, 1}, std::move(y))};
}

}  // namespace optlab::tasks
