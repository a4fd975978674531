#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sve/matrix.hpp"

namespace sve {

// Exponent parameter of the alpha-entmax family. alpha = 1 is softmax,
// alpha = 2 is sparsemax; alpha > 1 admits exact zeros, alpha <= 1 stays
// dense. When learnable, the trainer clamps updates to [kAlphaMin, kAlphaMax].
struct AlphaParam {
  double value = 1.5;
  bool learnable = false;
};

inline constexpr double kAlphaMin = 0.25;
inline constexpr double kAlphaMax = 3.0;
// Inside this band of alpha = 1 the exponent 1/(alpha-1) is too large to
// evaluate; softmax is substituted (continuity bounds the error).
inline constexpr double kSoftmaxBranchTol = 1e-4;

inline void check_finite(const std::vector<double>& z, const char* who) {
  for (double v : z)
    if (!std::isfinite(v)) throw std::domain_error(std::string(who) + ": non-finite input");
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  check_finite(z, "softmax");
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Euclidean projection onto the probability simplex (sort and threshold).
inline std::vector<double> sparsemax(const std::vector<double>& z) {
  check_finite(z, "sparsemax");
  const std::size_t d = z.size();
  std::vector<double> sorted(z);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cumsum = 0.0;
  double tau = 0.0;
  std::size_t support = 0;
  for (std::size_t k = 0; k < d; ++k) {
    cumsum += sorted[k];
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] > t) {
      tau = t;
      support = k + 1;
    }
  }
  (void)support;
  std::vector<double> p(d);
  for (std::size_t i = 0; i < d; ++i) p[i] = std::max(0.0, z[i] - tau);
  return p;
}

namespace detail {

// Threshold map of alpha-entmax. For alpha > 1 the stationarity condition is
// p_j = [(alpha-1)(z_j - tau)]_+^{1/(alpha-1)}; for alpha < 1 it is
// p_j = [(1-alpha)(tau - z_j)]^{-1/(1-alpha)} with tau > max(z) and a fully
// dense solution. Both sums are strictly decreasing in tau.
inline double entmax_coordinate(double zj, double tau, double alpha) {
  if (alpha > 1.0) {
    const double base = (alpha - 1.0) * (zj - tau);
    return base > 0.0 ? std::pow(base, 1.0 / (alpha - 1.0)) : 0.0;
  }
  const double q = 1.0 - alpha;
  return std::pow(q * (tau - zj), -1.0 / q);
}

}  // namespace detail

inline std::vector<double> entmax(const std::vector<double>& z, const AlphaParam& alpha) {
  check_finite(z, "entmax");
  if (!(alpha.value > 0.0)) throw std::domain_error("entmax: alpha must be > 0");
  if (std::abs(alpha.value - 1.0) < kSoftmaxBranchTol) return softmax(z);

  const double a = alpha.value;
  const std::size_t d = z.size();
  const double zmax = *std::max_element(z.begin(), z.end());

  double lo, hi;
  if (a > 1.0) {
    // sum(lo) >= 1 because the max coordinate alone contributes exactly 1
    lo = zmax - 1.0 / (a - 1.0);
    hi = zmax;
  } else {
    const double q = 1.0 - a;
    lo = zmax + 1.0 / q;                                    // max coordinate = 1
    hi = zmax + std::pow(static_cast<double>(d), q) / q;    // every coordinate <= 1/d
  }

  auto sum_at = [&](double tau) {
    double s = 0.0;
    for (double zj : z) s += detail::entmax_coordinate(zj, tau, a);
    return s;
  };

  double tau = 0.5 * (lo + hi);
  double residual = sum_at(tau) - 1.0;
  for (int iter = 0; iter < 100 && std::abs(residual) >= 1e-12; ++iter) {
    if (residual > 0.0)
      lo = tau;  // sum too large: raise tau
    else
      hi = tau;
    tau = 0.5 * (lo + hi);
    residual = sum_at(tau) - 1.0;
  }
  if (std::abs(residual) > 1e-6)
    throw std::runtime_error("entmax: bisection did not converge");

  std::vector<double> p(d);
  double sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    p[i] = detail::entmax_coordinate(z[i], tau, a);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

struct EntmaxGrad {
  std::vector<double> grad_z;
  double grad_alpha = 0.0;
};

// Backward pass of entmax. grad_z applies the Jacobian
// J = diag(s) - s s^T / ||s||_1 with s_i = p_i^{2-alpha} on the support.
// grad_alpha differentiates the threshold equation in alpha; it is zero off
// the learnable path and inside the softmax branch, where the forward output
// does not depend on alpha.
inline EntmaxGrad entmax_backward(const std::vector<double>& z,
                                  const std::vector<double>& p,
                                  const AlphaParam& alpha,
                                  const std::vector<double>& upstream) {
  if (p.size() != z.size() || upstream.size() != z.size())
    throw std::invalid_argument("entmax_backward: length mismatch");
  double psum = 0.0;
  for (double v : p) {
    if (v < -1e-9) throw std::invalid_argument("entmax_backward: p is not a probability vector");
    psum += v;
  }
  if (std::abs(psum - 1.0) > 1e-6)
    throw std::invalid_argument("entmax_backward: p does not sum to 1");

  const bool softmax_branch = std::abs(alpha.value - 1.0) < kSoftmaxBranchTol;
  const double a = softmax_branch ? 1.0 : alpha.value;
  const std::size_t d = z.size();

  std::vector<double> s(d, 0.0);
  double s_total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (p[i] > 0.0) {
      s[i] = std::pow(p[i], 2.0 - a);
      s_total += s[i];
    }
  }

  EntmaxGrad out;
  out.grad_z.assign(d, 0.0);
  double su = 0.0;
  for (std::size_t i = 0; i < d; ++i) su += s[i] * upstream[i];
  const double mean = su / s_total;
  for (std::size_t i = 0; i < d; ++i)
    if (s[i] > 0.0) out.grad_z[i] = s[i] * (upstream[i] - mean);

  if (!alpha.learnable || softmax_branch) return out;

  // dp/dalpha on the support, with eps = alpha - 1:
  //   y_i   = p_i/eps^2 - p_i ln p_i / eps
  //   tau'  = sum(y) / sum(s)
  //   dp_i  = y_i - s_i tau'
  const double eps = a - 1.0;
  double y_sum = 0.0;
  std::vector<double> y(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (p[i] <= 0.0) continue;
    y[i] = p[i] / (eps * eps) - p[i] * std::log(p[i]) / eps;
    y_sum += y[i];
  }
  const double tau_dot = y_sum / s_total;
  for (std::size_t i = 0; i < d; ++i)
    if (p[i] > 0.0) out.grad_alpha += upstream[i] * (y[i] - s[i] * tau_dot);
  return out;
}

}  // namespace sve
