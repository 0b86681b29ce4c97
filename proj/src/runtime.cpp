#include "iid/runtime.hpp"

#include <cstdlib>
#include <cstring>

#include <malloc.h>
#include <unistd.h>

#if defined(__x86_64__)
#include <cblas.h>
#include <cpuid.h>
#endif

namespace iid {

namespace {

#if defined(__x86_64__)

unsigned long long read_xcr0() {
    unsigned eax, edx;
    __asm__ volatile("xgetbv" : "=a"(eax), "=d"(edx) : "c"(0));
    return (static_cast<unsigned long long>(edx) << 32) | eax;
}

// Leaf 7 feature bits plus the OS XSAVE state checks the ISA manuals require.
const char* best_core_type() {
    unsigned eax, ebx, ecx, edx;
    if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return nullptr;
    if (!(ecx & (1u << 27))) return nullptr;  // OSXSAVE
    const unsigned long long xcr0 = read_xcr0();
    if ((xcr0 & 0x6) != 0x6) return nullptr;  // XMM+YMM state
    if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return nullptr;

    const bool avx512 = (ebx & (1u << 16)) && (ebx & (1u << 17)) && (ebx & (1u << 30)) &&
                        (ebx & (1u << 31)) && (xcr0 & 0xe0) == 0xe0;  // f, dq, bw, vl + ZMM state
    if (avx512) return "SKYLAKEX";
    if (ebx & (1u << 5)) return "HASWELL";  // AVX2
    return nullptr;
}

// OpenBLAS fallbacks chosen when CPUID model detection fails.
bool weak_kernel_selected() {
    const char* name = openblas_get_corename();
    return name == nullptr || std::strcmp(name, "Prescott") == 0 || std::strcmp(name, "Northwood") == 0 ||
           std::strcmp(name, "generic") == 0 || std::strcmp(name, "Atom") == 0;
}

#endif  // __x86_64__

}  // namespace

void tune_numeric_runtime(char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

#if defined(__x86_64__)
    if (std::getenv("IID_NO_BLAS_TUNE") || std::getenv("IID_BLAS_TUNED") ||
        std::getenv("OPENBLAS_CORETYPE"))
        return;
    if (!weak_kernel_selected()) return;
    const char* core = best_core_type();
    if (!core) return;
    setenv("OPENBLAS_CORETYPE", core, 1);
    // A masked CPU model almost always means contended virtual cores, where
    // the GEMM thread pool costs more than it returns.
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    setenv("IID_BLAS_TUNED", "1", 1);
    execv("/proc/self/exe", argv);
    // exec failed: keep running on the fallback kernel.
    unsetenv("IID_BLAS_TUNED");
#else
    (void)argv;
#endif
}

}  // namespace iid
