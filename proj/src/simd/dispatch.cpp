#include "perchom/simd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace perchom::simd {

namespace {

const Kernels& pick() {
    const char* env = std::getenv("PERCHOM_SIMD");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return scalar_kernels();
        if (std::strcmp(env, "avx2") == 0) {
            const Kernels* k = avx2_kernels();
            if (k != nullptr) return *k;
            return scalar_kernels();
        }
    }
    const Kernels* k = avx2_kernels();
    return k != nullptr ? *k : scalar_kernels();
}

} // namespace

const Kernels& active() {
    static const Kernels& k = pick();
    return k;
}

} // namespace perchom::simd
