#include "perchom/simd/kernels.hpp"

#if defined(PERCHOM_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))

#include <immintrin.h>

// Explicit mul+add (no FMA) so the elementwise kernels round exactly like the
// scalar reference; only the reductions reassociate.

namespace perchom::simd {

namespace {

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void xpby_avx2(const double* x, double b, double* y, std::size_t n) {
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        vy = _mm256_add_pd(vx, _mm256_mul_pd(vb, vy));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] = x[i] + b * y[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void vmul_avx2(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                              _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] * y[i];
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                               _mm256_loadu_pd(y + i)));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

double nrm2sq_avx2(const double* x, std::size_t n) { return dot_avx2(x, x, n); }

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

void stencil_fwd_avx2(const double* w, const double* u, double* out,
                      std::size_t s, std::size_t n) {
    if (s >= n) return;
    const std::size_t m = n - s;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        __m256d du = _mm256_sub_pd(_mm256_loadu_pd(u + i + s),
                                   _mm256_loadu_pd(u + i));
        __m256d vo = _mm256_loadu_pd(out + i);
        vo = _mm256_add_pd(vo, _mm256_mul_pd(_mm256_loadu_pd(w + i), du));
        _mm256_storeu_pd(out + i, vo);
    }
    for (; i < m; ++i) out[i] += w[i] * (u[i + s] - u[i]);
}

void stencil_rev_avx2(const double* w, const double* u, double* out,
                      std::size_t s, std::size_t n) {
    if (s >= n) return;
    const std::size_t m = n - s;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        __m256d du = _mm256_sub_pd(_mm256_loadu_pd(u + i),
                                   _mm256_loadu_pd(u + i + s));
        __m256d vo = _mm256_loadu_pd(out + i + s);
        vo = _mm256_add_pd(vo, _mm256_mul_pd(_mm256_loadu_pd(w + i), du));
        _mm256_storeu_pd(out + i + s, vo);
    }
    for (; i < m; ++i) out[i + s] += w[i] * (u[i] - u[i + s]);
}

} // namespace

const Kernels* avx2_kernels() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const Kernels k = {
        axpy_avx2, xpby_avx2,   scale_avx2,       vmul_avx2,
        dot_avx2,  nrm2sq_avx2, sum_avx2,         stencil_fwd_avx2,
        stencil_rev_avx2,       "avx2",
    };
    return &k;
}

} // namespace perchom::simd

#else

namespace perchom::simd {
const Kernels* avx2_kernels() { return nullptr; }
} // namespace perchom::simd

#endif
