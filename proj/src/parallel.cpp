#include "vitclust/parallel.hpp"

#include <atomic>

namespace vitclust {

namespace {
std::atomic<unsigned> g_threads{1};
}

void set_num_threads(unsigned n) { g_threads.store(n == 0 ? 1 : n); }

unsigned num_threads() { return g_threads.load(); }

}  // namespace vitclust
