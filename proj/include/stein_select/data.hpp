#pragma once

#include "stein_select/common.hpp"
#include "stein_select/random.hpp"

namespace stein {

/// N x d observations with optional column names.
struct DataMatrix {
  Matrix values;
  std::vector<std::string> column_names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

enum class ToyScenario { Ds, NestedDs, Ms, NestedMs };

inline const char* to_string(ToyScenario s) {
  switch (s) {
    case ToyScenario::Ds: return "ds";
    case ToyScenario::NestedDs: return "nested_ds";
    case ToyScenario::Ms: return "ms";
    case ToyScenario::NestedMs: return "nested_ms";
  }
  return "?";
}

inline ToyScenario parse_toy_scenario(const std::string& s) {
  if (s == "ds") return ToyScenario::Ds;
  if (s == "nested_ds") return ToyScenario::NestedDs;
  if (s == "ms") return ToyScenario::Ms;
  if (s == "nested_ms") return ToyScenario::NestedMs;
  fail(ErrorKind::Config, "unknown toy scenario '" + s + "' (expected ds, nested_ds, ms or nested_ms)");
}

/// Generator covariance: diag(1, 1/2) for data selection, I otherwise.
inline Matrix toy_covariance(ToyScenario s) {
  Matrix c = Matrix::Identity(2, 2);
  if (s == ToyScenario::Ds) c(1, 1) = 0.5;
  return c;
}

/// n draws from N(0, toy_covariance(s)).
inline DataMatrix generate_toy(ToyScenario s, Eigen::Index n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::Config, "sample count must be positive");
  Rng rng(seed);
  const Vector sd = toy_covariance(s).diagonal().cwiseSqrt();
  DataMatrix out;
  out.values.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index b = 0; b < 2; ++b) out.values(i, b) = sd(b) * rng.normal();
  out.column_names = {"x1", "x2"};
  return out;
}

enum class PpcaScenario { A, B };

inline PpcaScenario parse_ppca_scenario(const std::string& s) {
  if (s == "A" || s == "a") return PpcaScenario::A;
  if (s == "B" || s == "b") return PpcaScenario::B;
  fail(ErrorKind::Config, "unknown pPCA scenario '" + s + "' (expected A or B)");
}

inline const char* to_string(PpcaScenario s) { return s == PpcaScenario::A ? "A" : "B"; }

/// Loading matrix of the well-specified block.
inline Matrix ppca_sim_loadings() {
  Matrix h(4, 2);
  h << 1, 0, -1, 1, 0, 1, -1, -1;
  return h;
}

struct PpcaSimData {
  DataMatrix data;
  std::vector<bool> include;  // true where the pPCA model holds
};

/// Dims 1-4: H z + e, z ~ N(0, I_2), e ~ N(0, I_4).
/// Dims 5-6 given W ~ Bernoulli(1/2):
///   A: N(0, 0.05^W I_2);   B: N(0, [[1, (-1)^W 0.99], [(-1)^W 0.99, 1]]).
inline PpcaSimData generate_ppca_sim(PpcaScenario s, Eigen::Index n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::Config, "sample count must be positive");
  Rng rng(seed);
  const Matrix h = ppca_sim_loadings();
  PpcaSimData out;
  out.data.values.resize(n, 6);
  const double rho = 0.99, crho = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z0 = rng.normal(), z1 = rng.normal();
    for (int b = 0; b < 4; ++b) out.data.values(i, b) = h(b, 0) * z0 + h(b, 1) * z1 + rng.normal();
    const bool w = rng.bernoulli(0.5);
    const double e0 = rng.normal(), e1 = rng.normal();
    if (s == PpcaScenario::A) {
      const double sd = w ? std::sqrt(0.05) : 1.0;
      out.data.values(i, 4) = sd * e0;
      out.data.values(i, 5) = sd * e1;
    } else {
      const double r = w ? -rho : rho;
      out.data.values(i, 4) = e0;
      out.data.values(i, 5) = r * e0 + crho * e1;
    }
  }
  out.data.column_names = {"x1", "x2", "x3", "x4", "x5", "x6"};
  out.include = {true, true, true, true, false, false};
  return out;
}

}  // namespace stein
