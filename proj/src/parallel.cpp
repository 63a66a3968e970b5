#include "ridehail/parallel.hpp"

#include <cstdlib>
#include <cstring>

namespace ridehail {

void for_each_index(std::size_t n, ExecMode mode, const std::function<void(std::size_t)>& body) {
    if (mode == ExecMode::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            body(static_cast<std::size_t>(i));
        return;
    }
    for (std::size_t i = 0; i < n; ++i) body(i);
}

ExecMode default_exec_mode() {
    const char* env = std::getenv("RIDEHAIL_SERIAL");
    if (env != nullptr && std::strcmp(env, "0") != 0) return ExecMode::serial;
    return ExecMode::parallel;
}

}  // namespace ridehail
