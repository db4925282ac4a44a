#pragma once

#include <cstddef>

namespace perchom::simd {

// Dense double-precision inner loops used by the solvers and the kernel
// evolution. Two implementations exist: a scalar reference and an AVX2
// variant selected at runtime. Elementwise ops (axpy, xpby, scale, vmul,
// stencil_*) are bit-identical across variants; reductions (dot, nrm2sq,
// sum) may differ in the last ulps because the accumulation order differs.
struct Kernels {
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // y[i] = x[i] + b * y[i]
    void (*xpby)(const double* x, double b, double* y, std::size_t n);
    // x[i] *= a
    void (*scale)(double a, double* x, std::size_t n);
    // z[i] = x[i] * y[i]
    void (*vmul)(const double* x, const double* y, double* z, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*nrm2sq)(const double* x, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    // out[i] += w[i] * (u[i+s] - u[i])       for i in [0, n-s)
    void (*stencil_fwd)(const double* w, const double* u, double* out,
                        std::size_t s, std::size_t n);
    // out[i+s] += w[i] * (u[i] - u[i+s])     for i in [0, n-s)
    void (*stencil_rev)(const double* w, const double* u, double* out,
                        std::size_t s, std::size_t n);
    const char* name;
};

// Scalar reference implementation; always available.
const Kernels& scalar_kernels();

// AVX2 implementation, or nullptr when unsupported by the CPU or the build.
const Kernels* avx2_kernels();

// The variant picked at process start: AVX2 when the CPU supports it,
// scalar otherwise. PERCHOM_SIMD=scalar|avx2|auto overrides.
const Kernels& active();

} // namespace perchom::simd
