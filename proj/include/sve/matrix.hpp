#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sve {

// Dense row-major float64 matrix. All arithmetic in the library is 64-bit.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols entries, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

// A^T A without forming the transpose.
inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols, a.cols);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) continue;
      for (std::size_t j = 0; j < a.cols; ++j) g(i, j) += ari * a(r, j);
    }
  return g;
}

inline double frobenius_norm_squared(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return s;
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_norm_squared(a)); }

inline bool all_finite(const Matrix& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Counter-free deterministic RNG: xoshiro256** seeded through splitmix64,
// normals via Box-Muller (two draws per call, no cached spare so the full
// state is the four words below).
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Rng {
  static constexpr const char* kAlgorithm = "xoshiro256**/box-muller";

  std::uint64_t seed = 0;
  std::array<std::uint64_t, 4> state{};

  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed_value) : seed(seed_value) {
    std::uint64_t s = seed_value;
    for (auto& w : state) w = splitmix64(s);
  }

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(state[1] * 5, 7) * 9;
    const std::uint64_t t = state[1] << 17;
    state[2] ^= state[0];
    state[3] ^= state[1];
    state[1] ^= state[2];
    state[0] ^= state[3];
    state[2] ^= t;
    state[3] = rotl(state[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal
  double normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // [0, n)
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::domain_error("uniform_index: empty range");
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }
};

// Independent stream for sub-component `stream` of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t x = master;
  (void)splitmix64(x);
  x ^= 0xa02bdbf7bb3c0a7ULL * (stream + 1);
  return splitmix64(x);
}

inline Matrix random_gaussian(std::size_t rows, std::size_t cols, double std_dev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = std_dev * rng.normal();
  return m;
}

}  // namespace sve
