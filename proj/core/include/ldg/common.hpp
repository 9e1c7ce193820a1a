#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ldg {

namespace detail {
// Tensor buffers of tens of megabytes are allocated and freed every training
// step; with glibc defaults those come from mmap and are unmapped on free, so
// each step pays the page faults again. Raising the thresholds keeps the
// blocks on the heap for reuse.
#if defined(__GLIBC__)
inline const bool malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
#endif
}  // namespace detail

using Shape = std::vector<std::int64_t>;

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::int64_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         std::multiplies<std::int64_t>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// High-water-mark allocation tracker over tensor payloads. Used by the
// profiler to report peak bytes of one forward pass.
struct MemTracker {
  static std::atomic<std::int64_t>& current() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
  static std::atomic<std::int64_t>& peak() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
  static void add(std::int64_t bytes) {
    std::int64_t now = current().fetch_add(bytes) + bytes;
    std::int64_t p = peak().load();
    while (now > p && !peak().compare_exchange_weak(p, now)) {
    }
  }
  static void sub(std::int64_t bytes) { current().fetch_sub(bytes); }
  static void reset_peak() { peak().store(current().load()); }
};

// Deterministic 64-bit string hash (FNV-1a); parameter init seeds are derived
// from (global seed, parameter name) so adding modules to a config never
// shifts the draws of existing ones.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// splitmix64, used both as a seed mixer and as the portable RNG core.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Portable deterministic RNG. std::uniform_real_distribution is
// implementation-defined, so uniforms are produced by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi_inclusive) {
    return lo + static_cast<std::int64_t>(
                    next_u64() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
  }

  // Box-Muller; one value per call keeps the stream simple to reason about.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

// Intra-op worker cap, read once from LDG_THREADS (default: all hardware
// threads). Results are bitwise identical for any cap: parallel loops only
// split work whose iterations write disjoint memory.
inline int thread_cap() {
  static const int cap = [] {
    if (const char* e = std::getenv("LDG_THREADS")) {
      int v = std::atoi(e);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return cap;
}

template <class F>
void parallel_for(std::int64_t n, F&& fn) {
  std::int64_t workers = std::min<std::int64_t>(thread_cap(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::int64_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::int64_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto& t : pool) t.join();
}

// one-shot value mixer (no carried state)
inline std::uint64_t mix64(std::uint64_t v) { return splitmix64(v); }

inline std::uint64_t param_seed(std::uint64_t global_seed, const std::string& name) {
  std::uint64_t s = fnv1a(name) ^ (global_seed * 0x9e3779b97f4a7c15ull + 0x1234567ull);
  return splitmix64(s);
}

}  // namespace ldg
