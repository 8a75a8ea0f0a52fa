#pragma once

#include "stein_select/common.hpp"

#include <random>

namespace stein {

/// Seeded generator with platform-independent variate transforms.
///
/// std::mt19937_64 output is fixed by the standard; the distribution
/// objects in <random> are not, so uniform/normal/gamma draws are derived
/// here from raw engine words. Changing any transform below changes
/// every seeded dataset and must bump kRngVersion.
class Rng {
 public:
  static constexpr const char* kRngVersion = "mt19937_64+polar+mtgamma/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal by the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Gamma(shape, rate = 1) by Marsaglia & Tsang.
  double gamma(double shape) {
    require(shape > 0.0, ErrorKind::Domain, "gamma shape must be positive");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// InverseGamma(shape, scale): 1 / Gamma(shape, rate = scale).
  double inverse_gamma(double shape, double scale) { return scale / gamma(shape); }

  Vector normal_vector(Eigen::Index n) {
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = normal();
    return out;
  }

  /// Haar-uniform d x k matrix with orthonormal columns.
  Matrix stiefel(Eigen::Index d, Eigen::Index k) {
    Matrix g(d, k);
    for (Eigen::Index c = 0; c < k; ++c)
      for (Eigen::Index r = 0; r < d; ++r) g(r, c) = normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, k);
    const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < k; ++c)
      if (r(c, c) < 0) q.col(c) = -q.col(c);
    return q;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stein
