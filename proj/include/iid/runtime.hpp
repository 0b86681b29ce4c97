#pragma once

namespace iid {

// Prepares the process for the tensor workload. Raises glibc's mmap
// threshold so the large per-iteration buffers are recycled in the arena
// instead of being returned to the kernel page by page, and, on hosts whose
// hypervisor masks the CPU model string, re-executes the process once with
// an explicit OPENBLAS_CORETYPE so OpenBLAS does not fall back to its
// pre-AVX kernels. Call first thing in main; argv is reused verbatim for
// the re-exec. Set IID_NO_BLAS_TUNE to disable the re-exec.
void tune_numeric_runtime(char** argv);

}  // namespace iid
