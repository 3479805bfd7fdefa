#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace qsc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Binary activation vector; every entry is exactly 0 or 1.
using BinaryState = std::vector<std::uint8_t>;

// Error hierarchy. Every failure the library reports derives from qsc::Error
// so callers (the CLI in particular) can catch one type and tag the module.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : Error { using Error::Error; };
struct ConsistencyError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct NormalizationError : Error { using Error::Error; };
struct CapacityError : Error { using Error::Error; };
struct EmbeddingError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream));
}

/// Uniform double in [0, 1) with 53 random bits. Unlike
/// std::uniform_real_distribution the result does not depend on the
/// standard library implementation.
template <class Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection; portable across standard libraries.
template <class Engine>
std::size_t uniform_index(Engine& rng, std::size_t n) {
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % range);
}

/// Fisher-Yates with uniform_index.
template <class T, class Engine>
void shuffle(std::vector<T>& v, Engine& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

/// Runs body(i) for i in [0, n) on up to `workers` threads. Work is split into
/// contiguous blocks; the body must only write to slot i of its outputs, which
/// makes the result independent of the worker count.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  workers = std::max(1u, workers);
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t nthreads = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nthreads);
  const std::size_t block = (n + nthreads - 1) / nthreads;
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t] {
      try {
        const std::size_t end = std::min(n, (t + 1) * block);
        for (std::size_t i = t * block; i < end; ++i) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::size_t count_active(const BinaryState& a) {
  return static_cast<std::size_t>(std::count(a.begin(), a.end(), std::uint8_t{1}));
}

inline Vector to_vector(const BinaryState& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
  return v;
}

inline std::string to_bitstring(const BinaryState& a) {
  std::string s(a.size(), '0');
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) s[i] = '1';
  }
  return s;
}

namespace io {

// Little-endian scalar helpers for the binary artifact formats.
template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ConsistencyError("unexpected end of data");
  char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void expect_magic(const std::string& in, std::size_t& pos, const char (&magic)[5]) {
  if (in.size() < pos + 4 || in.compare(pos, 4, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected ") + magic);
  }
  pos += 4;
}

}  // namespace io
}  // namespace qsc
