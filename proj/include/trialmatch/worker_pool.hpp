#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace trialmatch {

/// Runs fn(i) for i in [0, count) on at most `max_in_flight` threads.
///
/// Results must be written to per-index slots by the caller, so completion
/// order never leaks into outputs. If any task throws, the exception of the
/// lowest failing index is rethrown after all workers have joined.
template <class Fn>
void parallel_for(std::size_t count, std::size_t max_in_flight, Fn&& fn) {
    if (count == 0) return;
    const std::size_t workers = std::clamp<std::size_t>(max_in_flight, 1, count);
    std::vector<std::exception_ptr> errors(count);

    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }

    for (auto& error : errors) {
        if (error) std::rethrow_exception(error);
    }
}

}  // namespace trialmatch
