#pragma once

#include <cstddef>
#include <functional>

namespace heatmpc {

/// Number of worker threads used by parallel_for. Initialized from HEATMPC_THREADS,
/// falling back to std::thread::hardware_concurrency().
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [begin, end). Indices are split into contiguous chunks, one per
/// thread; bodies must write only to per-index storage so results do not depend on the
/// thread count. The first exception thrown by any body is rethrown on the caller.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

/// Runs two independent tasks, concurrently when more than one thread is available.
void parallel_invoke(const std::function<void()>& a, const std::function<void()>& b);

}  // namespace heatmpc
