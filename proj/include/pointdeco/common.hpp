#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pointdeco {

enum class ErrorCode {
  BehindCamera,
  MalformedFile,
  MissingKey,
  MalformedMatrix,
  MalformedLine,
  InvalidClass,
  EmptyFrustum,
  ShapeMismatch,
  MissingMask,
  DivergedLoss,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::MalformedMatrix: return "MalformedMatrix";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InvalidClass: return "InvalidClass";
    case ErrorCode::EmptyFrustum: return "EmptyFrustum";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingMask: return "MissingMask";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. mt19937_64 output is fixed by the standard; the
// distribution helpers below are hand-rolled because std:: distributions are
// implementation-defined and would break cross-toolchain reproducibility.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n) without modulo bias.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Box-Muller; one value per call, the sine half is discarded.
inline double gaussian(Rng& rng, double mean = 0.0, double sigma = 1.0) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return mean + sigma * r * std::cos(two_pi * u2);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Per-frame seed: frames are independently reproducible regardless of the
// order they are processed in.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view frame_id) {
  return splitmix64(global_seed ^ splitmix64(fnv1a64(frame_id)));
}

// Rounds through float; values that must survive a 32-bit container
// bit-exactly are kept float-representable at the source.  The volatile
// temporary forces the narrowing to happen: gcc 11's SLP vectorizer
// otherwise fuses adjacent double stores and drops the float round trip.
inline double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

}  // namespace pointdeco
