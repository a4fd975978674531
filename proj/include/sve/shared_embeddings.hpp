#pragma once

#include <span>

#include <Eigen/Dense>

#include "sve/entmax.hpp"
#include "sve/matrix.hpp"
#include "sve/task_data.hpp"

namespace sve {

struct InitScheme {
  enum class Kind { gaussian, orthogonal_det_plus_one };
  Kind kind = Kind::gaussian;
  double std_dev = 1.0;
};

// Raw observed-variable embeddings Z (N x C), shared embeddings S (D x C),
// target embeddings Z_out (total classes x C). All learnable.
struct EmbeddingStore {
  Matrix Z;
  Matrix S;
  Matrix Z_out;

  std::size_t embedding_dim() const { return S.cols; }  // C
  std::size_t shared_count() const { return S.rows; }   // D
};

// Probability mapping used on attention logit rows.
struct AttentionKernel {
  enum class Kind { softmax, entmax };
  Kind kind = Kind::softmax;
  AlphaParam alpha;

  std::vector<double> map(const std::vector<double>& logits) const {
    return kind == Kind::softmax ? softmax(logits) : entmax(logits, alpha);
  }
};

namespace detail {

// Random orthogonal matrix with det +1: QR of a Gaussian draw, R-diagonal
// signs fixed for uniqueness, then one column flipped if det(Q) = -1.
inline Matrix random_special_orthogonal(std::size_t n, double std_dev, Rng& rng) {
  Matrix g = random_gaussian(n, n, std_dev, rng);
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = g(i, j);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  if (q.determinant() < 0.0) q.col(n - 1) = -q.col(n - 1);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = q(i, j);
  return out;
}

}  // namespace detail

// Draw order is fixed (Z, Z_out, S) so equal seeds give bitwise-equal stores.
inline EmbeddingStore init_store(const TaskBundle& bundle, std::size_t c, std::size_t d,
                                 const InitScheme& scheme, Rng& rng) {
  if (c < 1 || d < 1) throw std::invalid_argument("init_store: dimensions must be >= 1");
  if (scheme.kind == InitScheme::Kind::orthogonal_det_plus_one && d != c)
    throw std::invalid_argument("init_store: orthogonal scheme requires shared count == embedding dim");
  if (!(scheme.std_dev > 0.0)) throw std::invalid_argument("init_store: std must be > 0");
  EmbeddingStore store;
  store.Z = random_gaussian(bundle.total_inputs, c, scheme.std_dev, rng);
  store.Z_out = random_gaussian(bundle.total_targets, c, scheme.std_dev, rng);
  store.S = scheme.kind == InitScheme::Kind::gaussian
                ? random_gaussian(d, c, scheme.std_dev, rng)
                : detail::random_special_orthogonal(d, scheme.std_dev, rng);
  return store;
}

// Attention output for one task's observed variables: logits Z[rows] S^T / sqrt(C),
// probabilities per row via the kernel, F = probs * S. Target embeddings are
// never attended; they are read directly from Z_out.
struct ProcessedEmbeddings {
  Matrix F;                // n x C
  Matrix attention_probs;  // n x D, each row on the simplex
  Matrix logits;           // n x D, kept for the backward pass
  std::vector<std::size_t> rows;  // global input rows, aligned with F
};

inline ProcessedEmbeddings attend(const EmbeddingStore& store,
                                  std::span<const std::size_t> task_rows,
                                  const AttentionKernel& kernel) {
  const std::size_t n = task_rows.size();
  const std::size_t c = store.embedding_dim();
  const std::size_t d = store.shared_count();
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));

  ProcessedEmbeddings out;
  out.rows.assign(task_rows.begin(), task_rows.end());
  out.logits = Matrix(n, d);
  out.attention_probs = Matrix(n, d);
  out.F = Matrix(n, c);

  std::vector<double> row_logits(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (task_rows[i] >= store.Z.rows) throw std::domain_error("attend: input row out of range");
    const auto z = store.Z.row(task_rows[i]);
    for (std::size_t k = 0; k < d; ++k) {
      row_logits[k] = dot(z, store.S.row(k)) * inv_sqrt_c;
      out.logits(i, k) = row_logits[k];
    }
    const std::vector<double> probs = kernel.map(row_logits);
    for (std::size_t k = 0; k < d; ++k) {
      out.attention_probs(i, k) = probs[k];
      if (probs[k] == 0.0) continue;
      const auto s = store.S.row(k);
      for (std::size_t j = 0; j < c; ++j) out.F(i, j) += probs[k] * s[j];
    }
  }
  return out;
}

struct AttendGrads {
  Matrix grad_z_rows;  // n x C, aligned with forward.rows
  Matrix grad_s;       // D x C
  double grad_alpha = 0.0;
};

// Exact gradients through F = P S and the kernel, including S's dual role as
// keys (through the logits) and values.
inline AttendGrads attend_backward(const EmbeddingStore& store,
                                   const AttentionKernel& kernel,
                                   const ProcessedEmbeddings& forward,
                                   const Matrix& upstream_f) {
  const std::size_t n = forward.rows.size();
  const std::size_t c = store.embedding_dim();
  const std::size_t d = store.shared_count();
  if (upstream_f.rows != n || upstream_f.cols != c)
    throw std::invalid_argument("attend_backward: upstream shape mismatch");
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));

  AttendGrads grads;
  grads.grad_z_rows = Matrix(n, c);
  grads.grad_s = Matrix(d, c);

  std::vector<double> logits(d), probs(d), grad_probs(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto df = upstream_f.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      logits[k] = forward.logits(i, k);
      probs[k] = forward.attention_probs(i, k);
      grad_probs[k] = dot(df, store.S.row(k));  // value path into probabilities
      // value path into S
      if (probs[k] != 0.0) {
        auto gs = grads.grad_s.row(k);
        for (std::size_t j = 0; j < c; ++j) gs[j] += probs[k] * df[j];
      }
    }

    std::vector<double> grad_logits;
    if (kernel.kind == AttentionKernel::Kind::softmax) {
      // J = diag(p) - p p^T
      const double mean = dot(probs, grad_probs);
      grad_logits.resize(d);
      for (std::size_t k = 0; k < d; ++k) grad_logits[k] = probs[k] * (grad_probs[k] - mean);
    } else {
      EntmaxGrad eg = entmax_backward(logits, probs, kernel.alpha, grad_probs);
      grad_logits = std::move(eg.grad_z);
      grads.grad_alpha += eg.grad_alpha;
    }

    // logits = Z[rows] S^T / sqrt(C)
    const auto z = store.Z.row(forward.rows[i]);
    auto gz = grads.grad_z_rows.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      const double gl = grad_logits[k] * inv_sqrt_c;
      if (gl == 0.0) continue;
      const auto s = store.S.row(k);
      auto gs = grads.grad_s.row(k);
      for (std::size_t j = 0; j < c; ++j) {
        gz[j] += gl * s[j];
        gs[j] += gl * z[j];
      }
    }
  }
  return grads;
}

}  // namespace sve
