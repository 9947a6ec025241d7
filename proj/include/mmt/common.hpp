#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

// Default scalar for model code. Tests and gradient checks assume double;
// -DMMT_REAL_FLOAT switches training builds to 32-bit.
#ifdef MMT_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
// Row-major throughout: tensors store flat row-major data and map onto these.
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatInt = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape incompatibility in a primitive; message names the primitive and shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Violated precondition or API contract.
struct ContractError : Error {
  using Error::Error;
};

// Unreadable text input; message carries the line number where known.
struct ParseError : Error {
  using Error::Error;
};

// Binary container with bad magic, version, or geometry.
struct FormatError : Error {
  using Error::Error;
};

// Invalid or unknown configuration keys/values.
struct ConfigError : Error {
  using Error::Error;
};

enum class DistanceKind { Cosine, Dot, Euclidean };

inline std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::Cosine: return "cosine";
    case DistanceKind::Dot: return "dot";
    case DistanceKind::Euclidean: return "euclidean";
  }
  return "cosine";
}

inline DistanceKind distance_kind_from_string(const std::string& s) {
  if (s == "cosine") return DistanceKind::Cosine;
  if (s == "dot") return DistanceKind::Dot;
  if (s == "euclidean") return DistanceKind::Euclidean;
  throw ConfigError("unknown distance kind: " + s);
}

// Counter-based RNG: every draw is a pure function of (seed, stream, counter),
// so streams can be forked deterministically and threaded explicitly through
// callers. Uses the splitmix64 finalizer as the bijective mixer.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)))) {}

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // [0, 1) with 53 bits of the draw; identical across platforms.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two draws per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased draw in [0, n) by rejection.
  std::uint64_t randint(std::uint64_t n) {
    if (n == 0) throw ContractError("CounterRng::randint: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Derive an independent substream; the parent is not advanced.
  CounterRng fork(std::uint64_t stream) const {
    CounterRng r(0);
    r.key_ = mix(key_ ^ (0xbf58476d1ce4e5b9ULL * (stream + 1)));
    return r;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

template <class T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.randint(i)]);
  }
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// FNV-1a over a byte string; used for config fingerprints in logs.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mmt
