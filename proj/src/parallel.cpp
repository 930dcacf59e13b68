#include "ablate/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ablate {

namespace {
int g_user_cap = 0;

int envCap() {
    const char* s = std::getenv("ABLATE_EVAL_THREADS");
    if (!s) return 0;
    const int v = std::atoi(s);
    return v > 0 ? v : 0;
}
} // namespace

int max_threads() {
    // Explicit requests win over the detected core count so callers can force
    // a specific worker count (including oversubscription, which exercises the
    // threaded path on small machines); results are count-independent anyway.
    if (g_user_cap > 0) return g_user_cap;
    if (const int e = envCap(); e > 0) return e;
    const int n = int(std::thread::hardware_concurrency());
    return n < 1 ? 1 : n;
}

void set_max_threads(int n) { g_user_cap = n > 0 ? n : 0; }

void parallel_chunks(std::int64_t count, std::int64_t chunk_size,
                     const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
    if (count <= 0) return;
    if (chunk_size < 1) chunk_size = 1;
    const std::int64_t n_chunks = (count + chunk_size - 1) / chunk_size;
    const int workers = int(std::min<std::int64_t>(max_threads(), n_chunks));

    if (workers <= 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c)
            fn(int(c), c * chunk_size, std::min(count, (c + 1) * chunk_size));
        return;
    }

    std::atomic<std::int64_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            fn(int(c), c * chunk_size, std::min(count, (c + 1) * chunk_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
}

} // namespace ablate
