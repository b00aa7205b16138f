// Particle-loop parallelism. Work is split into contiguous index chunks;
// callers only use it where iterations touch disjoint state (per-particle
// RNG streams and rows), so results are identical at any thread count.

#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace sb {

inline std::atomic<int>& num_threads_slot() {
    static std::atomic<int> n{1};
    return n;
}

inline void set_num_threads(int n) { num_threads_slot().store(std::max(1, n)); }
inline int num_threads() { return num_threads_slot().load(); }

template <class Fn>
inline void parallel_for(int begin, int end, Fn&& fn) {
    const int total = end - begin;
    const int nt = std::min(num_threads(), total);
    if (nt <= 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(nt);
    const int chunk = (total + nt - 1) / nt;
    for (int w = 0; w < nt; ++w) {
        int lo = begin + w * chunk;
        int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : workers) t.join();
}

} // namespace sb
