#pragma once

#include <cstdlib>
#include <cstring>
#include <unistd.h>

namespace cnslab {

// OpenBLAS reads its kernel selection when the library is loaded, so the variables have
// to be in place before the process starts. If either is missing we set it and exec
// ourselves again; on exec failure we carry on with whatever was detected.
inline void pin_blas_environment(char** argv)
{
    bool changed = false;
    if (!std::getenv("OPENBLAS_CORETYPE")) {
        setenv("OPENBLAS_CORETYPE", "Haswell", 1);
        changed = true;
    }
    if (!std::getenv("OPENBLAS_NUM_THREADS")) {
        setenv("OPENBLAS_NUM_THREADS", "1", 1);
        changed = true;
    }
    if (changed && !std::getenv("CNSLAB_REEXEC")) {
        setenv("CNSLAB_REEXEC", "1", 1);
        execv("/proc/self/exe", argv);
    }
}

} // namespace cnslab
