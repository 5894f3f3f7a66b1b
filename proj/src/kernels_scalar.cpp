#include "cyclocast/kern/kernels.hpp"

#include <cmath>

// Reference kernels. Reductions use the striped accumulation contract
// described in kernels.hpp so that SIMD variants can match them bit for bit.

namespace cyclocast::kern::scalar {

namespace {

void axpy(double* y, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void axpby(double* z, const double* x, double a, const double* y, double b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
}

void scale(double* y, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void vmul(double* z, const double* x, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void vadd(double* z, const double* x, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void vsub(double* z, const double* x, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

// Striped reduction skeleton: 4 independent accumulators over full blocks,
// combined as (s0+s2)+(s1+s3), then the tail added sequentially. This is
// exactly the order an AVX2 4-lane accumulator with the standard
// low/high-half horizontal combine produces.
template <typename Term>
double reduce4(std::size_t n, Term term) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    const std::size_t nb = n / 4 * 4;
    for (std::size_t i = 0; i < nb; i += 4) {
        s0 += term(i + 0);
        s1 += term(i + 1);
        s2 += term(i + 2);
        s3 += term(i + 3);
    }
    double s = (s0 + s2) + (s1 + s3);
    for (std::size_t i = nb; i < n; ++i) s += term(i);
    return s;
}

double dot(const double* x, const double* y, std::size_t n) {
    return reduce4(n, [&](std::size_t i) { return x[i] * y[i]; });
}

double sum(const double* x, std::size_t n) {
    return reduce4(n, [&](std::size_t i) { return x[i]; });
}

double sumsq(const double* x, std::size_t n) {
    return reduce4(n, [&](std::size_t i) { return x[i] * x[i]; });
}

double sumabs(const double* x, std::size_t n) {
    return reduce4(n, [&](std::size_t i) { return std::fabs(x[i]); });
}

void adam_step(double* p, double* m, double* v, const double* g,
               double lr, double b1, double b2, double bc1, double bc2,
               double eps, std::size_t n) {
    const double c1 = 1.0 - b1;
    const double c2 = 1.0 - b2;
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        const double mi = b1 * m[i] + c1 * gi;
        const double vi = b2 * v[i] + c2 * (gi * gi);
        m[i] = mi;
        v[i] = vi;
        p[i] = p[i] - lr * ((mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
}

}  // namespace

const Ops ops = {axpy, axpby, scale, vmul, vadd, vsub,
                 dot,  sum,   sumsq, sumabs, adam_step};

}  // namespace cyclocast::kern::scalar
