#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <vector>

#include "lrpca/nn/array4.hpp"

namespace lrpca::rpca {

using Matrix = Eigen::MatrixXd;

/// Singular value thresholding, the prox of tau * nuclear norm.
Matrix svt(const Matrix& m, double tau);

/// Elementwise sign(x) * max(|x| - tau, 0), the prox of tau * l1 norm.
Matrix soft_threshold(const Matrix& m, double tau);

double nuclear_norm(const Matrix& m);

/// Weights of min ||B||_* + lambda ||T||_1 + mu/2 ||N||_F^2 s.t. D = B + T + N.
/// Unset weights take data-dependent defaults in resolve().
struct RPCAConfig {
  std::optional<double> lambda;  // default 1 / sqrt(max(m, n))
  std::optional<double> mu;      // default 10 * lambda
  std::optional<double> alpha;   // initial penalty, default 1.25 / ||D||_2
  double rho = 1.5;              // penalty growth per iteration
  double alpha_growth_cap = 1e7; // alpha never exceeds cap * initial alpha
  std::size_t max_iters = 500;
  double tol = 1e-7;             // on ||D - B - T - N||_F / ||D||_F

  /// Copy with every weight filled in for `d`; throws ConfigError when a
  /// weight is not strictly positive or the schedule is invalid.
  RPCAConfig resolve(const Matrix& d) const;
};

struct RPCAResult {
  Matrix B;
  Matrix T;
  Matrix N;
  std::size_t iterations = 0;
  /// Normalized constraint residual after each iteration.
  std::vector<double> residual_history;
  /// False when max_iters ran out before the residual reached tol.
  bool converged = false;
};

/// Inexact augmented-Lagrangian alternation over B, T, N and the multiplier.
RPCAResult rpca_solve(const Matrix& d, const RPCAConfig& config = {});

/// Plane (n, c) of `a` as an H x W matrix, and back.
template <typename T>
Matrix to_matrix(const nn::Array4<T>& a, std::size_t n = 0, std::size_t c = 0);
template <typename T>
void write_plane(const Matrix& m, nn::Array4<T>& a, std::size_t n = 0, std::size_t c = 0);

}  // namespace lrpca::rpca
