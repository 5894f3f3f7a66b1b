#include "cyclocast/kern/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace cyclocast::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

struct Resolved {
    const Ops* ops;
    std::string name;
};

Resolved resolve() {
    const char* want = std::getenv("CYCLOCAST_ISA");
    if (want && std::strcmp(want, "scalar") == 0) return {&scalar::ops, "scalar"};
    const Ops* v = avx2::ops();
    if (v && cpu_has_avx2()) {
        if (want && std::strcmp(want, "avx2") != 0 && std::strcmp(want, "") != 0)
            std::fprintf(stderr, "cyclocast: unknown CYCLOCAST_ISA '%s', using avx2\n", want);
        return {v, "avx2"};
    }
    if (want && std::strcmp(want, "avx2") == 0)
        std::fprintf(stderr, "cyclocast: CYCLOCAST_ISA=avx2 requested but unavailable, using scalar\n");
    return {&scalar::ops, "scalar"};
}

const Resolved& resolved() {
    static const Resolved r = resolve();
    return r;
}

}  // namespace

const Ops& active() { return *resolved().ops; }

const std::string& active_name() { return resolved().name; }

}  // namespace cyclocast::kern
