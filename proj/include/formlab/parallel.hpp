#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace formlab::par {

// 0 means auto-detect.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Chunk boundaries depend only on n, never on the thread count, so every
// reduction folds partial results in the same order regardless of schedule.
inline constexpr std::size_t kChunk = 1024;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunk) {
    return n == 0 ? 0 : (n + chunk - 1) / chunk;
}

// Runs fn(chunk_index, begin, end) over fixed chunks; fn must only write to
// state owned by its chunk (or element) for the result to be deterministic.
inline void for_chunks(std::size_t n, int threads,
                       const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                       std::size_t chunk = kChunk) {
    std::size_t nchunks = chunk_count(n, chunk);
    if (nchunks == 0) return;
    threads = resolve_threads(threads);
    if (threads <= 1 || nchunks == 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    int nworkers = std::min<std::size_t>(static_cast<std::size_t>(threads), nchunks);
    pool.reserve(nworkers);
    for (int t = 0; t < nworkers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    for_chunks(n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

// Map each fixed chunk to a partial state, then fold partials as a pairwise
// tree in fixed order. State needs combine(State&, const State&) semantics
// supplied by the caller.
template <class State, class ChunkFn, class CombineFn>
State map_reduce(std::size_t n, int threads, State init, ChunkFn map_chunk, CombineFn combine,
                 std::size_t chunk = kChunk) {
    std::size_t nchunks = chunk_count(n, chunk);
    if (nchunks == 0) return init;
    std::vector<State> partials(nchunks, init);
    for_chunks(
        n, threads,
        [&](std::size_t c, std::size_t b, std::size_t e) { map_chunk(partials[c], b, e); },
        chunk);
    // pairwise tree: combine stride-neighbors until one remains
    for (std::size_t stride = 1; stride < nchunks; stride *= 2) {
        for (std::size_t i = 0; i + stride < nchunks; i += 2 * stride) {
            combine(partials[i], partials[i + stride]);
        }
    }
    return partials[0];
}

}  // namespace formlab::par
