#pragma once

#include <cstddef>
#include <string>

// Vector kernels used by the hot loops (convolution rows, elementwise
// diffusion math, reductions, optimizer updates). Two implementations are
// provided: a scalar reference and an AVX2 variant, selected once at runtime.
//
// The scalar versions are the definition of each kernel's result. Every
// variant must produce bit-identical output, which constrains the design:
//   - elementwise kernels are written as mul-then-add (no FMA contraction;
//     the build sets -ffp-contract=off),
//   - reductions accumulate into 4 striped partial sums combined in the
//     fixed order (s0+s2)+(s1+s3), followed by the sequential tail.
// Equivalence is asserted bitwise in tests/test_kernels.cpp.

namespace cyclocast::kern {

struct Ops {
    // y[i] += a * x[i]
    void (*axpy)(double* y, const double* x, double a, std::size_t n);
    // z[i] = a * x[i] + b * y[i]
    void (*axpby)(double* z, const double* x, double a, const double* y, double b, std::size_t n);
    // y[i] = a * x[i]
    void (*scale)(double* y, const double* x, double a, std::size_t n);
    // z[i] = x[i] * y[i]
    void (*vmul)(double* z, const double* x, const double* y, std::size_t n);
    // z[i] = x[i] + y[i]
    void (*vadd)(double* z, const double* x, const double* y, std::size_t n);
    // z[i] = x[i] - y[i]
    void (*vsub)(double* z, const double* x, const double* y, std::size_t n);
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // sum_i x[i]
    double (*sum)(const double* x, std::size_t n);
    // sum_i x[i]^2
    double (*sumsq)(const double* x, std::size_t n);
    // sum_i |x[i]|
    double (*sumabs)(const double* x, std::size_t n);
    // Fused Adam update:
    //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g*g;
    //   p -= lr * (m / bc1) / (sqrt(v / bc2) + eps)
    void (*adam_step)(double* p, double* m, double* v, const double* g,
                      double lr, double b1, double b2, double bc1, double bc2,
                      double eps, std::size_t n);
};

// Scalar reference kernels (always available; the behavioural spec).
namespace scalar {
extern const Ops ops;
}

// AVX2 kernels; null when the binary was built without AVX2 support.
namespace avx2 {
extern const Ops* ops();  // nullptr if unavailable at build time
}

// Resolved once on first use: AVX2 when the CPU supports it, otherwise
// scalar. CYCLOCAST_ISA=scalar|avx2 overrides (avx2 falls back to scalar
// with a warning if the CPU lacks it).
const Ops& active();

// Name of the variant `active()` resolved to ("scalar" or "avx2").
const std::string& active_name();

}  // namespace cyclocast::kern
