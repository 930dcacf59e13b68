#pragma once

#include <cstdint>
#include <functional>

namespace ablate {

// Worker count: set_max_threads value if set, else ABLATE_EVAL_THREADS if
// set, else the detected hardware count. Explicit values are honored as-is
// (oversubscription allowed); results never depend on the worker count.
int max_threads();

// 0 restores the default (ABLATE_EVAL_THREADS, then hardware count).
void set_max_threads(int n);

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, count).
// Chunk boundaries depend only on (count, chunk_size), never on the worker
// count, so per-chunk partial results are reproducible; callers that reduce
// must combine partials in chunk order.
void parallel_chunks(std::int64_t count, std::int64_t chunk_size,
                     const std::function<void(int, std::int64_t, std::int64_t)>& fn);

} // namespace ablate
