#include "mmfuse/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace mmfuse::kernels {

namespace {

const Ops& select() {
    if (const char* env = std::getenv("MMFUSE_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) return avx2_ops();
#endif
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_available()) return avx2_ops();
#endif
    return scalar_ops();
}

} // namespace

const Ops& active() {
    static const Ops& ops = select();
    return ops;
}

} // namespace mmfuse::kernels
