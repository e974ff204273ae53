#pragma once

#include <exception>

namespace gdt::detail {

// exceptions do not cross an OpenMP region; capture the first one inside the
// loop body and rethrow it after the region
struct ErrorCollector {
    std::exception_ptr first = nullptr;

    void capture() {
#pragma omp critical(gdt_error_collector)
        {
            if (!first) first = std::current_exception();
        }
    }
    void rethrow_if_any() const {
        if (first) std::rethrow_exception(first);
    }
};

} // namespace gdt::detail
