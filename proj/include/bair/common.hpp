#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace bair {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: UsageError -> 1, IoError -> 2, ContractError/FormatError -> 3.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact rational over int64, kept normalized: den > 0, gcd(|num|, den) == 1.
// Every quantity the lattice code stores fits comfortably in this range.
struct Rat {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rat() = default;
  Rat(std::int64_t n, std::int64_t d) : num(n), den(d) { normalize(); }
  static Rat integer(std::int64_t n) { return Rat(n, 1); }

  void normalize() {
    if (den == 0) throw ContractError("Rat: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  double to_double() const { return double(num) / double(den); }
  std::string str() const {
    return std::to_string(num) + "/" + std::to_string(den);
  }

  friend Rat operator+(const Rat& a, const Rat& b) {
    std::int64_t g = std::gcd(a.den, b.den);
    std::int64_t bl = b.den / g;
    return Rat(a.num * bl + b.num * (a.den / g), a.den * bl);
  }
  friend Rat operator-(const Rat& a, const Rat& b) {
    return a + Rat(-b.num, b.den);
  }
  friend Rat operator*(const Rat& a, const Rat& b) {
    std::int64_t g1 = std::gcd(a.num < 0 ? -a.num : a.num, b.den);
    std::int64_t g2 = std::gcd(b.num < 0 ? -b.num : b.num, a.den);
    return Rat((a.num / g1) * (b.num / g2), (a.den / g2) * (b.den / g1));
  }
  friend bool operator==(const Rat& a, const Rat& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator!=(const Rat& a, const Rat& b) { return !(a == b); }
  friend bool operator<(const Rat& a, const Rat& b) {
    return a.num * b.den < b.num * a.den;
  }
  friend bool operator<=(const Rat& a, const Rat& b) {
    return a.num * b.den <= b.num * a.den;
  }
};

// Uniform draws pinned to raw mt19937 output so seeded results do not depend
// on standard-library distribution internals.
inline double uniform_unit(std::mt19937& rng) {
  return rng() * (1.0 / 4294967296.0);  // [0, 1)
}

inline double uniform_real(std::mt19937& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

// Inclusive on both ends.
inline int uniform_int(std::mt19937& rng, int lo, int hi) {
  std::uint64_t span = std::uint64_t(hi - lo) + 1;
  return lo + int((std::uint64_t(rng()) * span) >> 32);
}

}  // namespace bair
