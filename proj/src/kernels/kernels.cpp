#include "kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace optlab::kern {

namespace {
thread_local bool g_parallel = true;
}

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) { g_parallel = on; }

// The k-loop is kept outermost-serial in every variant so that each C entry
// accumulates its products in ascending k order; this is what makes the
// parallel and reference versions agree bitwise.
void matmul(bool trans_a, bool trans_b, std::size_t m, std::size_t k, std::size_t n,
            const double* a, const double* b, double* c, bool accumulate) {
    const bool par = g_parallel && m >= 64;
    if (!trans_a && !trans_b) {
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            double* crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            const double* arow = a + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = b + kk * n;
#pragma omp simd
                for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
            }
        }
    } else if (!trans_a && trans_b) {
        // b is n x k. Materialize b^T once so the inner loop streams rows and
        // keeps the same ascending-k accumulation order as the other cases.
        std::vector<double> bt(k * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b[j * k + kk];
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            double* crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            const double* arow = a + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = bt.data() + kk * n;
#pragma omp simd
                for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
            }
        }
    } else if (trans_a && !trans_b) {
        // a is k x m
        if (m * n <= 65536 && k > 8 * m) {
            // Small output, long inner dimension (weight gradients): stream
            // both operands with kk outermost. Still ascending-k per entry.
            if (!accumulate) std::fill(c, c + m * n, 0.0);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double* arow = a + kk * m;
                const double* brow = b + kk * n;
                for (std::size_t i = 0; i < m; ++i) {
                    const double av = arow[i];
                    double* crow = c + i * n;
#pragma omp simd
                    for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
                }
            }
            return;
        }
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            double* crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = a[kk * m + i];
                const double* brow = b + kk * n;
#pragma omp simd
                for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
            }
        }
    } else {
        // a is k x m, b is n x k; transpose b and fall through to the
        // trans_a layout above.
        std::vector<double> bt(k * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b[j * k + kk];
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            double* crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = a[kk * m + i];
                const double* brow = bt.data() + kk * n;
#pragma omp simd
                for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
            }
        }
    }
}

namespace {

// Fixed-block reduction: partials per block, combined serially in block
// order, so the result does not depend on the number of threads.
template <class BlockFn>
double blocked_reduce(std::size_t n, BlockFn&& block_fn, bool par) {
    const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
    if (nblocks <= 1) return n ? block_fn(0, n) : 0.0;
    std::vector<double> partial(nblocks);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(nblocks); ++bi) {
        const std::size_t lo = bi * kReduceBlock;
        partial[bi] = block_fn(lo, std::min(lo + kReduceBlock, n));
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace

double sum(const double* x, std::size_t n) {
    return blocked_reduce(
        n,
        [x](std::size_t lo, std::size_t hi) {
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) acc += x[i];
            return acc;
        },
        g_parallel && n >= 4 * kReduceBlock);
}

double dot(const double* x, const double* y, std::size_t n) {
    return blocked_reduce(
        n,
        [x, y](std::size_t lo, std::size_t hi) {
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) acc = std::fma(x[i], y[i], acc);
            return acc;
        },
        g_parallel && n >= 4 * kReduceBlock);
}

#define OPTLAB_MAP2(NAME, EXPR)                                                   \
    void NAME(const double* x, const double* y, double* z, std::size_t n) {       \
        const bool par = g_parallel && n >= 16384;                                \
        _Pragma("omp parallel for schedule(static) if (par)")                     \
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {     \
            z[i] = (EXPR);                                                        \
        }                                                                         \
    }

OPTLAB_MAP2(vadd, x[i] + y[i])
OPTLAB_MAP2(vsub, x[i] - y[i])
OPTLAB_MAP2(vmul, x[i] * y[i])
OPTLAB_MAP2(vdiv, x[i] / y[i])
#undef OPTLAB_MAP2

void vaxpy(double a, const double* x, double* y, std::size_t n) {
    const bool par = g_parallel && n >= 16384;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] += a * x[i];
}

#define OPTLAB_MAP1(NAME, EXPR)                                                   \
    void NAME(const double* x, double* z, std::size_t n) {                        \
        const bool par = g_parallel && n >= 16384;                                \
        _Pragma("omp parallel for schedule(static) if (par)")                     \
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {     \
            z[i] = (EXPR);                                                        \
        }                                                                         \
    }

OPTLAB_MAP1(vneg, -x[i])
OPTLAB_MAP1(vsquare, x[i] * x[i])
OPTLAB_MAP1(vsqrt, std::sqrt(x[i]))
OPTLAB_MAP1(vrecip, 1.0 / x[i])
OPTLAB_MAP1(vexp, std::exp(x[i]))
OPTLAB_MAP1(vlog, std::log(x[i]))
OPTLAB_MAP1(vsigmoid, 1.0 / (1.0 + std::exp(-x[i])))
OPTLAB_MAP1(vtanh, std::tanh(x[i]))
OPTLAB_MAP1(vrelu, x[i] > 0.0 ? x[i] : 0.0)
OPTLAB_MAP1(velu, x[i] > 0.0 ? x[i] : std::expm1(x[i]))
#undef OPTLAB_MAP1

void vscale(const double* x, double a, double* z, std::size_t n) {
    const bool par = g_parallel && n >= 16384;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) z[i] = a * x[i];
}

void vshift(const double* x, double a, double* z, std::size_t n) {
    const bool par = g_parallel && n >= 16384;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) z[i] = x[i] + a;
}

// Plain serial loops, written independently of the parallel variants. They
// share only the accumulation-order contract (ascending k, fixed reduction
// blocks), which is what the bitwise-equality tests pin down.
namespace ref {

void matmul(bool trans_a, bool trans_b, std::size_t m, std::size_t k, std::size_t n,
            const double* a, const double* b, double* c, bool accumulate) {
    auto at = [&](std::size_t i, std::size_t kk) { return trans_a ? a[kk * m + i] : a[i * k + kk]; };
    auto bt = [&](std::size_t kk, std::size_t j) { return trans_b ? b[j * k + kk] : b[kk * n + j]; };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc = std::fma(at(i, kk), bt(kk, j), acc);
            c[i * n + j] = acc;
        }
    }
}

double sum(const double* x, std::size_t n) {
    double total = 0.0;
    for (std::size_t lo = 0; lo < n; lo += kReduceBlock) {
        const std::size_t hi = std::min(lo + kReduceBlock, n);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i];
        total += acc;
    }
    return total;
}

double dot(const double* x, const double* y, std::size_t n) {
    double total = 0.0;
    for (std::size_t lo = 0; lo < n; lo += kReduceBlock) {
        const std::size_t hi = std::min(lo + kReduceBlock, n);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc = std::fma(x[i], y[i], acc);
        total += acc;
    }
    return total;
}

void vadd(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void vmul(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void vexp(const double* x, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = std::exp(x[i]);
}

void vsigmoid(const double* x, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

}  // namespace ref

}  // namespace optlab::kern
