#pragma once

#include "sve/matrix.hpp"
#include "sve/numerics.hpp"

namespace sve {

// At most one penalty is active per run; the three notions of independence
// are evaluated separately.
struct RegularizerConfig {
  enum class Kind { none, orthogonality, stable_rank, von_neumann };
  Kind kind = Kind::none;
  double weight = 0.0;
};

struct PenaltyResult {
  double value = 0.0;
  Matrix grad;  // gradient of `value` with respect to S
};

// sum_{i=j} (1 - G_ij)^2 + sum_{i!=j} G_ij^2 with G = S^T S. Algebraically
// equal to ||S^T S - I||_F^2, so the gradient is 4 S (G - I).
inline PenaltyResult orthogonality_penalty(const Matrix& s) {
  if (s.rows != s.cols)
    throw std::invalid_argument("orthogonality_penalty: S must be square (D = C)");
  Matrix g = gram(s);
  double value = 0.0;
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t j = 0; j < g.cols; ++j) {
      if (i == j) {
        const double d = 1.0 - g(i, j);
        value += d * d;
      } else {
        value += g(i, j) * g(i, j);
      }
    }
  for (std::size_t i = 0; i < g.rows; ++i) g(i, i) -= 1.0;
  Matrix grad = matmul(s, g);
  for (double& v : grad.data) v *= 4.0;
  return {value, std::move(grad)};
}

// C - sr(S) with sr(S) = ||S||_F^2 / sigma_max^2. Quotient rule through the
// power-iteration pair (sigma, u, v); when the top two singular values
// coincide the vector pair is one valid subgradient choice.
inline PenaltyResult stable_rank_penalty(const Matrix& s) {
  const SpectralNormResult top = spectral_norm(s);  // throws on zero matrix
  const double sigma = top.value;
  const double fro2 = frobenius_norm_squared(s);
  const double value = static_cast<double>(s.cols) - fro2 / (sigma * sigma);

  // d(C - sr)/dS = -2 S / sigma^2 + 2 ||S||_F^2 u v^T / sigma^3
  Matrix grad(s.rows, s.cols);
  const double a = -2.0 / (sigma * sigma);
  const double b = 2.0 * fro2 / (sigma * sigma * sigma);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j)
      grad(i, j) = a * s(i, j) + b * top.left[i] * top.right[j];
  return {value, std::move(grad)};
}

// V(R) = -sum sigma_i^2 ln sigma_i^2 of R, the row-sum normalization of S
// (each row divided by its entry sum, which may leave entries of mixed sign).
// sigma^2 = 0 terms contribute 0; singular values below 1e-12 are dropped
// from the gradient. Returns V(R) itself; the training loss uses -weight * V(R).
inline PenaltyResult von_neumann_penalty(const Matrix& s) {
  std::vector<double> row_sum(s.rows);
  for (std::size_t i = 0; i < s.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s.cols; ++j) sum += s(i, j);
    if (std::abs(sum) < 1e-12)
      throw std::domain_error("von_neumann_penalty: row " + std::to_string(i) +
                              " has near-zero sum, normalization undefined");
    row_sum[i] = sum;
  }
  Matrix r(s.rows, s.cols);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j) r(i, j) = s(i, j) / row_sum[i];

  const SvdResult decomp = svd(r);
  double value = 0.0;
  for (double sigma : decomp.singular_values) {
    const double s2 = sigma * sigma;
    if (s2 > 0.0) value -= s2 * std::log(s2);
  }

  // dV/dR = -sum 2 sigma (ln sigma^2 + 1) u_i v_i^T via dsigma_i = u_i^T dR v_i
  Matrix dv_dr(s.rows, s.cols);
  for (std::size_t t = 0; t < decomp.singular_values.size(); ++t) {
    const double sigma = decomp.singular_values[t];
    if (sigma < 1e-12) continue;
    const double coeff = -2.0 * sigma * (std::log(sigma * sigma) + 1.0);
    for (std::size_t i = 0; i < s.rows; ++i) {
      const double ui = decomp.left_vectors(i, t);
      if (ui == 0.0) continue;
      for (std::size_t j = 0; j < s.cols; ++j)
        dv_dr(i, j) += coeff * ui * decomp.right_vectors(j, t);
    }
  }

  // through the normalization: dR_ij/dS_ik = (delta_jk - R_ij) / row_sum_i
  Matrix grad(s.rows, s.cols);
  for (std::size_t i = 0; i < s.rows; ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < s.cols; ++j) inner += dv_dr(i, j) * r(i, j);
    for (std::size_t k = 0; k < s.cols; ++k)
      grad(i, k) = (dv_dr(i, k) - inner) / row_sum[i];
  }
  return {value, std::move(grad)};
}

// Loss-side term of the configured penalty: +w L_orth, +w (C - sr), or
// -w V(R), with the matching gradient.
inline PenaltyResult regularizer_term(const RegularizerConfig& config, const Matrix& s) {
  PenaltyResult term;
  switch (config.kind) {
    case RegularizerConfig::Kind::none:
      term.grad = Matrix(s.rows, s.cols);
      return term;
    case RegularizerConfig::Kind::orthogonality:
      term = orthogonality_penalty(s);
      break;
    case RegularizerConfig::Kind::stable_rank:
      term = stable_rank_penalty(s);
      break;
    case RegularizerConfig::Kind::von_neumann: {
      term = von_neumann_penalty(s);
      term.value = -term.value;
      for (double& v : term.grad.data) v = -v;
      break;
    }
  }
  term.value *= config.weight;
  for (double& v : term.grad.data) v *= config.weight;
  return term;
}

}  // namespace sve
