#include "perchom/simd/kernels.hpp"

namespace perchom::simd {

namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void xpby_scalar(const double* x, double b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + b * y[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void vmul_scalar(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double nrm2sq_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

void stencil_fwd_scalar(const double* w, const double* u, double* out,
                        std::size_t s, std::size_t n) {
    for (std::size_t i = 0; i + s < n; ++i) out[i] += w[i] * (u[i + s] - u[i]);
}

void stencil_rev_scalar(const double* w, const double* u, double* out,
                        std::size_t s, std::size_t n) {
    for (std::size_t i = 0; i + s < n; ++i) out[i + s] += w[i] * (u[i] - u[i + s]);
}

} // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        axpy_scalar, xpby_scalar,   scale_scalar,       vmul_scalar,
        dot_scalar,  nrm2sq_scalar, sum_scalar,         stencil_fwd_scalar,
        stencil_rev_scalar,         "scalar",
    };
    return k;
}

} // namespace perchom::simd
