#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace linerecon {

// Error kinds follow the failure modes of the ops that raise them.
struct ParseError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ValidationError : std::runtime_error { using std::runtime_error::runtime_error; };
struct SpecError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DegenerateFit : std::runtime_error { using std::runtime_error::runtime_error; };
struct IllConditionedIntersection : std::runtime_error { using std::runtime_error::runtime_error; };
struct OutsideBox : std::runtime_error { using std::runtime_error::runtime_error; };
struct OnBoundary : std::runtime_error { using std::runtime_error::runtime_error; };
struct GrazingViewpoint : std::runtime_error { using std::runtime_error::runtime_error; };
struct TooManyPlanes : std::runtime_error { using std::runtime_error::runtime_error; };
struct NearDuplicatePlanes : std::runtime_error { using std::runtime_error::runtime_error; };
struct MissingPlane : std::runtime_error { using std::runtime_error::runtime_error; };
struct HardConstraintViolated : std::runtime_error { using std::runtime_error::runtime_error; };
struct SolverFailure : std::runtime_error { using std::runtime_error::runtime_error; };
struct TooLarge : std::runtime_error { using std::runtime_error::runtime_error; };
struct NonConvexFace : std::runtime_error { using std::runtime_error::runtime_error; };
struct EmptyMesh : std::runtime_error { using std::runtime_error::runtime_error; };
struct IoError : std::runtime_error { using std::runtime_error::runtime_error; };

// Deterministic RNG: MT19937-64 plus hand-rolled uniforms, so generated
// scenes do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    mt_[0] = seed;
    for (idx_ = 1; idx_ < kN; ++idx_)
      mt_[idx_] = 6364136223846793005ULL * (mt_[idx_ - 1] ^ (mt_[idx_ - 1] >> 62)) + idx_;
    idx_ = kN;
  }

  std::uint64_t next_u64() {
    if (idx_ >= kN) generate();
    std::uint64_t x = mt_[idx_++];
    x ^= (x >> 29) & 0x5555555555555555ULL;
    x ^= (x << 17) & 0x71d67fffeda60000ULL;
    x ^= (x << 37) & 0xfff7eee000000000ULL;
    x ^= x >> 43;
    return x;
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection keeps it exactly uniform.
  std::size_t index(std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do { x = next_u64(); } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  // Independent stream for a sub-task (grid cell, run index, ...).
  Rng fork(std::uint64_t salt) const {
    std::uint64_t h = seed_ ^ (salt + 0x9e3779b97f4a7c15ULL + (seed_ << 6) + (seed_ >> 2));
    return Rng(h * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL);
  }

 private:
  void generate() {
    constexpr std::uint64_t kHi = 0xffffffff80000000ULL, kLo = 0x7fffffffULL;
    for (unsigned k = 0; k < kN; ++k) {
      std::uint64_t x = (mt_[k] & kHi) | (mt_[(k + 1) % kN] & kLo);
      mt_[k] = mt_[(k + 156) % kN] ^ (x >> 1) ^ ((x & 1) ? 0xb5026f5aa96619e9ULL : 0);
    }
    idx_ = 0;
  }

  static constexpr unsigned kN = 312;
  std::uint64_t mt_[kN];
  unsigned idx_;
  std::uint64_t seed_;
};

// Deterministic slot-based parallel for: f(i) must write only to state owned
// by index i, so results are independent of thread scheduling.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& f) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const std::size_t workers = std::min(static_cast<std::size_t>(threads), n);
  std::atomic<std::size_t> counter{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = counter.fetch_add(1);
        if (i >= n) break;
        f(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace linerecon
