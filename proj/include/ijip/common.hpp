#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ijip {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (manifest, embedding file, config, template).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Caller supplied arguments that violate an operation's precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Transport or protocol failure talking to a model backend.
class BackendError : public Error {
public:
  using Error::Error;
};

/// Sentinel text used wherever a missing prediction is rendered.
inline constexpr std::string_view kBottom = "\xE2\x8A\xA5"; // U+22A5

/// A prediction is a label name, or empty for the sentinel.
using Prediction = std::optional<std::string>;

inline std::string prediction_text(const Prediction &p) {
  return p ? *p : std::string(kBottom);
}

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a, stable across platforms.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Order-sensitive combination of hashes.
constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

inline std::uint64_t hash_parts(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto p : parts) h = hash_combine(h, p);
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit word.
constexpr double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Unbiased index in [0, n) drawn from a standard 64-bit engine.
/// std::uniform_int_distribution is implementation-defined, so seeded
/// results would otherwise differ between standard libraries.
inline std::size_t uniform_index(std::mt19937_64 &rng, std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % bound);
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

inline double uniform_real(std::mt19937_64 &rng) { return unit_interval(rng()); }

} // namespace ijip
