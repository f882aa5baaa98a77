#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nlv::detail {

/// Observations per reduction block. Fixed so that the reduction tree, and
/// therefore every floating-point sum, is independent of the worker count.
inline constexpr std::size_t kBlockSize = 256;

inline std::size_t block_count(std::size_t n) { return (n + kBlockSize - 1) / kBlockSize; }

/// Runs fn(block) for every block on up to `threads` workers. If blocks
/// throw, the exception from the lowest block index is rethrown.
template <class Fn>
void for_each_block(std::size_t n_blocks, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n_blocks <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first_error;
    std::size_t first_block = n_blocks;
    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard lock(mu);
                if (b < first_block) {
                    first_block = b;
                    first_error = std::current_exception();
                }
            }
        }
    };
    const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(threads, n_blocks));
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace nlv::detail
