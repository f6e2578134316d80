#pragma once

// Shared plumbing: error types, deterministic RNG, hashing, little-endian
// stream helpers. Everything else in the library sits on top of this file.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cass {

inline constexpr const char* kVersion = "0.1.0";

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or a diverging optimization. CLI exit code 3.
struct numeric_error : error {
  using error::error;
};

// File format / filesystem problems. CLI exit code 4.
struct io_error : error {
  using error::error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw error(msg);
}

inline void check_arg(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64 bit). Used for file checksums and seed derivation.

inline std::uint64_t fnv1a(const void* bytes, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_u64(std::uint64_t h, std::uint64_t v) {
  return fnv1a(&v, sizeof v, h);
}

inline std::uint64_t hash_str(std::uint64_t h, const std::string& s) {
  return fnv1a(s.data(), s.size(), h);
}

// Derives a stream-independent seed from a base seed plus salts, so that
// e.g. batch i of stage s always sees the same randomness no matter what
// ran before it.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = hash_u64(0xcbf29ce484222325ull, base);
  h = hash_str(h, tag);
  h = hash_u64(h, a);
  h = hash_u64(h, b);
  return h;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-reproducible by the standard; the
// distribution helpers are hand-rolled because the std distributions are
// implementation-defined.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    check_arg(n > 0, "uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t bound = ~0ull - ~0ull % static_cast<std::uint64_t>(n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= bound);
    return static_cast<int>(x % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; consumes exactly two raw draws per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Little-endian binary stream helpers for the dataset and checkpoint formats.
// Values are serialized byte-by-byte so the formats do not depend on host
// endianness.

namespace detail {

template <typename T>
inline void write_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
inline T read_le(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw io_error("unexpected end of file");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

}  // namespace detail

inline void write_u32(std::ostream& os, std::uint32_t v) { detail::write_le(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { detail::write_le(os, v); }
inline std::uint32_t read_u32(std::istream& is) { return detail::read_le<std::uint32_t>(is); }
inline std::uint64_t read_u64(std::istream& is) { return detail::read_le<std::uint64_t>(is); }

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
  std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline double read_f64(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is, std::uint32_t max_len = 1u << 20) {
  std::uint32_t n = read_u32(is);
  if (n > max_len) throw io_error("string field too long; corrupt file?");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw io_error("unexpected end of file");
  return s;
}

}  // namespace cass
