#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <functional>
#include <limits>

#include "sve/matrix.hpp"

namespace sve {

struct SvdResult {
  std::vector<double> singular_values;  // descending, nonnegative
  Matrix left_vectors;                  // rows x k, columns are u_i
  Matrix right_vectors;                 // cols x k, columns are v_i
};

namespace detail {
using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenRowMajor> as_eigen(const Matrix& a) {
  return {a.data.data(), static_cast<Eigen::Index>(a.rows),
          static_cast<Eigen::Index>(a.cols)};
}
}  // namespace detail

// Full thin SVD, A = U diag(s) V^T. Verifies its own reconstruction and
// throws on numerical failure rather than returning a silently bad factor.
inline SvdResult svd(const Matrix& a) {
  if (!all_finite(a)) throw std::domain_error("svd: input has non-finite entries");
  const auto m = detail::as_eigen(a);
  Eigen::JacobiSVD<detail::EigenRowMajor> decomp(
      m, Eigen::ComputeThinU | Eigen::ComputeThinV);

  const std::size_t k = std::min(a.rows, a.cols);
  SvdResult out;
  out.singular_values.assign(decomp.singularValues().data(),
                             decomp.singularValues().data() + k);
  out.left_vectors = Matrix(a.rows, k);
  out.right_vectors = Matrix(a.cols, k);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.left_vectors(i, j) = decomp.matrixU()(static_cast<Eigen::Index>(i),
                                                static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < a.cols; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.right_vectors(i, j) = decomp.matrixV()(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(j));

  // ||A - U S V^T||_F <= 1e-8 ||A||_F
  double err = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      double rec = 0.0;
      for (std::size_t t = 0; t < k; ++t)
        rec += out.left_vectors(i, t) * out.singular_values[t] * out.right_vectors(j, t);
      const double d = a(i, j) - rec;
      err += d * d;
    }
  const double scale = frobenius_norm(a);
  if (scale > 0.0 && std::sqrt(err) > 1e-8 * scale)
    throw std::runtime_error("svd: decomposition failed reconstruction check");
  return out;
}

struct SpectralNormResult {
  double value = 0.0;
  std::vector<double> left;   // u, length rows
  std::vector<double> right;  // v, length cols
};

// Largest singular value and its vector pair by power iteration on A^T A.
// Converges when successive sigma estimates differ by < 1e-12 relative,
// capped at 10000 iterations.
inline SpectralNormResult spectral_norm(const Matrix& a) {
  bool nonzero = false;
  for (double v : a.data)
    if (v != 0.0) { nonzero = true; break; }
  if (!nonzero) throw std::domain_error("spectral_norm: zero matrix");

  Rng rng(0x5eedULL);  // fixed internal stream; result is deterministic
  std::vector<double> v(a.cols);
  for (double& x : v) x = rng.normal();
  double vn = norm(v);
  for (double& x : v) x /= vn;

  std::vector<double> u(a.rows);
  double sigma = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  constexpr int kMaxIter = 10000;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    // u = A v
    for (std::size_t i = 0; i < a.rows; ++i) u[i] = dot(a.row(i), v);
    const double un = norm(u);
    if (un == 0.0) {
      // v landed in the null space; re-randomize
      for (double& x : v) x = rng.normal();
      const double nv = norm(v);
      for (double& x : v) x /= nv;
      continue;
    }
    for (double& x : u) x /= un;
    // v = A^T u
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
      const auto r = a.row(i);
      for (std::size_t j = 0; j < a.cols; ++j) v[j] += r[j] * u[i];
    }
    sigma = norm(v);
    for (double& x : v) x /= sigma;
    if (std::abs(sigma - prev) < 1e-12 * std::max(sigma, 1e-300)) break;
    prev = sigma;
  }
  if (iter == kMaxIter)
    throw std::runtime_error("spectral_norm: power iteration did not converge");
  return {sigma, std::move(u), std::move(v)};
}

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h. Test oracle for every
// analytic backward pass in the library.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  if (!(h > 0.0)) throw std::domain_error("finite_difference_gradient: h must be > 0");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_difference_gradient: non-finite function value");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace sve
