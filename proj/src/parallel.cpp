#include "layoutflow/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace layoutflow {

int worker_count()
{
    if (const char* env = std::getenv("LAYOUTFLOW_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) {
                return n;
            }
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t n, int chunks,
                     const std::function<void(int chunk, std::size_t begin, std::size_t end)>& fn, int workers)
{
    chunks = std::max(1, std::min<int>(chunks, static_cast<int>(std::max<std::size_t>(n, 1))));
    auto bounds = [&](int c) { return n * static_cast<std::size_t>(c) / static_cast<std::size_t>(chunks); };
    workers = workers <= 0 ? chunks : std::min(workers, chunks);
    if (workers == 1) {
        for (int c = 0; c < chunks; ++c) fn(c, bounds(c), bounds(c + 1));
        return;
    }
    std::vector<std::exception_ptr> errors(chunks);
    std::atomic<int> next{0};
    {
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&] {
                for (int c = next++; c < chunks; c = next++) {
                    try {
                        fn(c, bounds(c), bounds(c + 1));
                    } catch (...) {
                        errors[c] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace layoutflow
