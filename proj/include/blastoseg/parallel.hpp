#pragma once

#include <functional>

namespace blastoseg {

/// Worker count used by parallel_for. Defaults to BLASTOSEG_THREADS when set,
/// otherwise std::thread::hardware_concurrency().
int thread_count();
void set_thread_count(int threads);

/// Runs fn(i) for i in [0, count). Each index is visited exactly once; callers
/// must write to disjoint outputs so results do not depend on the worker count.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace blastoseg
