#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace xpt {

/// Caps every internal parallel region. 0 restores the default (all available cores).
void set_worker_count(int workers);
int worker_count();

/// Runs fn(i) for i in [0, count) across the worker pool. Each index must write only to its own
/// output slot. The first exception thrown by any iteration is rethrown on the caller's thread.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    std::exception_ptr error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace xpt
