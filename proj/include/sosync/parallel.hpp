#pragma once

#include <functional>

namespace sosync {

int max_threads();

// Runs fn(0..count-1). With parallel = true the iterations run under OpenMP
// when available; the serial path is the reference used by tests and the
// benchmark. Work items must be independent (experiments derive one RNG
// stream per item, so both paths produce identical results).
void parallel_for(int count, const std::function<void(int)>& fn, bool parallel = true);

}  // namespace sosync
