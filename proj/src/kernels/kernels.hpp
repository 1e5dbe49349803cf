#pragma once

#include <cstddef>

// Dense double-precision kernels backing the tensor layer.
//
// Every kernel exists twice: the default entry points parallelize with
// OpenMP, and kern::ref holds the serial implementations kept for testing
// and benchmarking. Both variants accumulate in the same order, so their
// results are bit-identical regardless of thread count. Reductions use a
// fixed block size (kReduceBlock) for the same reason: block partials are
// combined serially in block order, never in thread-completion order.
namespace optlab::kern {

inline constexpr std::size_t kReduceBlock = 4096;

// Thread-local switch so worker threads that already own a core can force
// the kernels they call into serial mode (avoids oversubscription when a
// benchmark pool runs many independent trajectories).
bool parallel_enabled();
void set_parallel(bool on);

struct SerialSection {
    SerialSection() : prev_(parallel_enabled()) { set_parallel(false); }
    ~SerialSection() { set_parallel(prev_); }
    SerialSection(const SerialSection&) = delete;
    SerialSection& operator=(const SerialSection&) = delete;

private:
    bool prev_;
};

// c (m x n) = op(a) * op(b), op(x) = transpose when the flag is set.
// a is m x k (or k x m when trans_a), b is k x n (or n x k when trans_b),
// all row-major. When accumulate is set the product is added onto c.
void matmul(bool trans_a, bool trans_b, std::size_t m, std::size_t k, std::size_t n,
            const double* a, const double* b, double* c, bool accumulate = false);

double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

void vadd(const double* x, const double* y, double* z, std::size_t n);
void vsub(const double* x, const double* y, double* z, std::size_t n);
void vmul(const double* x, const double* y, double* z, std::size_t n);
void vdiv(const double* x, const double* y, double* z, std::size_t n);
void vaxpy(double a, const double* x, double* y, std::size_t n);  // y += a*x

void vneg(const double* x, double* z, std::size_t n);
void vsquare(const double* x, double* z, std::size_t n);
void vsqrt(const double* x, double* z, std::size_t n);
void vrecip(const double* x, double* z, std::size_t n);
void vexp(const double* x, double* z, std::size_t n);
void vlog(const double* x, double* z, std::size_t n);
void vsigmoid(const double* x, double* z, std::size_t n);
void vtanh(const double* x, double* z, std::size_t n);
void vrelu(const double* x, double* z, std::size_t n);
void velu(const double* x, double* z, std::size_t n);
void vscale(const double* x, double a, double* z, std::size_t n);
void vshift(const double* x, double a, double* z, std::size_t n);

namespace ref {

void matmul(bool trans_a, bool trans_b, std::size_t m, std::size_t k, std::size_t n,
            const double* a, const double* b, double* c, bool accumulate = false);
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void vadd(const double* x, const double* y, double* z, std::size_t n);
void vmul(const double* x, const double* y, double* z, std::size_t n);
void vexp(const double* x, double* z, std::size_t n);
void vsigmoid(const double* x, double* z, std::size_t n);

}  // namespace ref

}  // namespace optlab::kern
