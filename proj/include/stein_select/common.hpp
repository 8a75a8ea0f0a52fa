#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stein {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unconstrained coordinates of a model's free parameters.
using ParamVector = Eigen::VectorXd;

enum class ErrorKind {
  Input,             // malformed argument (dimension mismatch etc.)
  InsufficientData,  // fewer samples than the estimator needs
  Numeric,           // factorization failed, non-finite values
  Domain,            // argument outside a model's definition domain
  Config,            // invalid experiment / policy configuration
  Io,                // file system errors
  Unsupported,       // valid request the current context cannot serve
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input: return "input error";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Unsupported: return "unsupported configuration";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Elementwise compensated accumulation of a fixed-shape matrix.
class CompensatedMatrixSum {
 public:
  CompensatedMatrixSum(Eigen::Index rows, Eigen::Index cols)
      : rows_(rows), cols_(cols), cells_(static_cast<std::size_t>(rows * cols)) {}

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index c = 0; c < cols_; ++c)
      for (Eigen::Index r = 0; r < rows_; ++r) cells_[static_cast<std::size_t>(c * rows_ + r)].add(m(r, c));
  }

  Matrix value() const {
    Matrix out(rows_, cols_);
    for (Eigen::Index c = 0; c < cols_; ++c)
      for (Eigen::Index r = 0; r < rows_; ++r) out(r, c) = cells_[static_cast<std::size_t>(c * rows_ + r)].value();
    return out;
  }

 private:
  Eigen::Index rows_;
  Eigen::Index cols_;
  std::vector<CompensatedSum> cells_;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline Matrix symmetrize(const Eigen::Ref<const Matrix>& m) { return 0.5 * (m + m.transpose()); }

/// log|det| and sign of a square matrix via partial-pivot LU.
struct LogDet {
  double log_abs = 0.0;
  int sign = 1;
};

inline LogDet log_abs_det(const Eigen::Ref<const Matrix>& m) {
  LogDet out;
  if (m.rows() == 0) return out;
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& f = lu.matrixLU();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const double d = f(i, i);
    if (d == 0.0) {
      out.sign = 0;
      out.log_abs = -std::numeric_limits<double>::infinity();
      return out;
    }
    if (d < 0) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(d));
  }
  out.sign *= static_cast<int>(lu.permutationP().determinant());
  return out;
}

/// Cholesky factor or a Numeric error naming `what`.
inline Eigen::LLT<Matrix> cholesky_or_throw(const Eigen::Ref<const Matrix>& m, const std::string& what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, what + " is not symmetric positive definite");
  return llt;
}

inline double log_det_spd(const Eigen::LLT<Matrix>& llt) {
  const Matrix& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace stein
