#include "lrpca/rpca/rpca.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "lrpca/errors.hpp"

namespace lrpca::rpca {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite input");
}

void require_tau(double tau, const char* what) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw ConfigError(std::string(what) + ": threshold must be finite and non-negative");
  }
}

double spectral_norm(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()(0);
}

}  // namespace

Matrix svt(const Matrix& m, double tau) {
  require_tau(tau, "svt");
  require_finite(m, "svt");
  if (m.size() == 0) return m;
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("svt: SVD did not converge");
  const Eigen::VectorXd shrunk = (svd.singularValues().array() - tau).max(0.0).matrix();
  Matrix out = svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
  if (!out.allFinite()) throw NumericError("svt: non-finite reconstruction");
  return out;
}

Matrix soft_threshold(const Matrix& m, double tau) {
  require_tau(tau, "soft_threshold");
  return m.unaryExpr([tau](double x) {
    const double mag = std::abs(x) - tau;
    return mag > 0.0 ? std::copysign(mag, x) : 0.0;
  });
}

double nuclear_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

RPCAConfig RPCAConfig::resolve(const Matrix& d) const {
  RPCAConfig c = *this;
  const double dim = static_cast<double>(std::max<Eigen::Index>(d.rows(), d.cols()));
  if (!c.lambda) c.lambda = dim > 0.0 ? 1.0 / std::sqrt(dim) : 1.0;
  if (!c.mu) c.mu = 10.0 * *c.lambda;
  if (!c.alpha) {
    const double s = spectral_norm(d);
    c.alpha = s > 0.0 ? 1.25 / s : 1.0;
  }
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(*c.lambda)) throw ConfigError("rpca: lambda must be positive");
  if (!positive(*c.mu)) throw ConfigError("rpca: mu must be positive");
  if (!positive(*c.alpha)) throw ConfigError("rpca: alpha must be positive");
  if (!(c.rho >= 1.0) || !std::isfinite(c.rho)) throw ConfigError("rpca: rho must be >= 1");
  if (!(c.alpha_growth_cap >= 1.0)) throw ConfigError("rpca: alpha_growth_cap must be >= 1");
  if (!positive(c.tol)) throw ConfigError("rpca: tol must be positive");
  if (c.max_iters == 0) throw ConfigError("rpca: max_iters must be positive");
  return c;
}

RPCAResult rpca_solve(const Matrix& d, const RPCAConfig& config) {
  require_finite(d, "rpca_solve");
  const RPCAConfig c = config.resolve(d);
  RPCAResult r;
  r.B = Matrix::Zero(d.rows(), d.cols());
  r.T = r.B;
  r.N = r.B;
  const double d_norm = d.norm();
  if (d_norm == 0.0) {
    r.converged = true;
    return r;
  }

  const double lambda = *c.lambda;
  const double mu = *c.mu;
  double alpha = *c.alpha;
  const double alpha_max = alpha * c.alpha_growth_cap;
  Matrix y = Matrix::Zero(d.rows(), d.cols());
  for (std::size_t it = 0; it < c.max_iters; ++it) {
    const Matrix scaled_y = y / alpha;
    r.B = svt(d - r.T - r.N + scaled_y, 1.0 / alpha);
    r.T = soft_threshold(d - r.B - r.N + scaled_y, lambda / alpha);
    r.N = (alpha / (mu + alpha)) * (d - r.B - r.T + scaled_y);
    const Matrix residual = d - r.B - r.T - r.N;
    y += alpha * residual;
    alpha = std::min(alpha * c.rho, alpha_max);
    const double rel = residual.norm() / d_norm;
    r.residual_history.push_back(rel);
    r.iterations = it + 1;
    if (!std::isfinite(rel)) throw NumericError("rpca_solve: residual became non-finite");
    if (rel <= c.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

template <typename T>
Matrix to_matrix(const nn::Array4<T>& a, std::size_t n, std::size_t c) {
  const auto& s = a.shape();
  Matrix m(static_cast<Eigen::Index>(s.h), static_cast<Eigen::Index>(s.w));
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x) {
      m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = static_cast<double>(a(n, c, y, x));
    }
  return m;
}

template <typename T>
void write_plane(const Matrix& m, nn::Array4<T>& a, std::size_t n, std::size_t c) {
  const auto& s = a.shape();
  if (static_cast<std::size_t>(m.rows()) != s.h || static_cast<std::size_t>(m.cols()) != s.w) {
    throw ShapeError("write_plane: matrix does not match plane " + s.str(),
                     static_cast<std::size_t>(m.rows()) != s.h ? "height" : "width");
  }
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x) {
      a(n, c, y, x) = static_cast<T>(m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)));
    }
}

template Matrix to_matrix<float>(const nn::Array4<float>&, std::size_t, std::size_t);
template Matrix to_matrix<double>(const nn::Array4<double>&, std::size_t, std::size_t);
template void write_plane<float>(const Matrix&, nn::Array4<float>&, std::size_t, std::size_t);
template void write_plane<double>(const Matrix&, nn::Array4<double>&, std::size_t, std::size_t);

}  // namespace lrpca::rpca
