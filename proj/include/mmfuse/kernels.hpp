#pragma once
// Low-level numeric kernels with a scalar reference implementation and an
// AVX2 variant selected at runtime. All higher-level code goes through the
// dispatch table so the two paths stay interchangeable.

#include <cstddef>
#include <string>

namespace mmfuse::kernels {

struct Ops {
    // out of bounds behavior is undefined; callers validate sizes.
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum of squared differences
    double (*sqdist)(const double* a, const double* b, std::size_t n);
    // out[i] = max(a[i], b[i])
    void (*vmax)(const double* a, const double* b, double* out, std::size_t n);
    const char* name;
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
bool avx2_available();
#endif

// Active table: AVX2 when the CPU supports it, overridable with the
// MMFUSE_KERNELS environment variable ("scalar" or "avx2").
const Ops& active();

} // namespace mmfuse::kernels
