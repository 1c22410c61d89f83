#include "rankope/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace rankope {

namespace {

int default_budget() {
    if (const char* env = std::getenv("RANKOPE_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& budget_slot() {
    static std::atomic<int> budget{default_budget()};
    return budget;
}

}  // namespace

int thread_budget() { return budget_slot().load(); }

void set_thread_budget(int threads) { budget_slot().store(threads < 1 ? 1 : threads); }

}  // namespace rankope
