#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace rankope {

// Worker count: --threads flag, else RANKOPE_THREADS, else hardware parallelism.
int thread_budget();
void set_thread_budget(int threads);

// Runs f(i) for i in [0, n). Workers pull indices dynamically; callers must
// write results into disjoint position-addressed slots so the outcome does not
// depend on scheduling. The first worker exception is rethrown on the caller.
template <typename F>
void parallel_for(int n, F&& f) {
    const int workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    if (failed.load(std::memory_order_relaxed)) return;
                    f(i);
                }
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace rankope
