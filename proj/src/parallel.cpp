#include "parallel.hpp"

#include <cstdlib>
#include <string>

namespace hcm {
namespace {

std::size_t initial_workers() {
  if (const char* env = std::getenv("HICOMSFEM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<std::size_t>& workers() {
  static std::atomic<std::size_t> w{initial_workers()};
  return w;
}

}  // namespace

std::size_t worker_count() { return workers().load(); }

void set_worker_count(std::size_t n) { workers().store(n == 0 ? 1 : n); }

}  // namespace hcm
