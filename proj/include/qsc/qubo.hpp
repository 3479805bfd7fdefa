#pragma once

#include "qsc/common.hpp"
#include "qsc/dictionary.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

namespace qsc {

/// Binary quadratic problem  H(a) = sum_i h_i a_i + sum_{i<j} Q_ij a_i a_j.
///
/// Q is stored as a full symmetric matrix with a zero diagonal, but each
/// unordered pair contributes once to the energy.
struct QuboProblem {
  Vector h;
  Matrix Q;
  double lambda = 0.0;
  /// 0.5 * ||X||^2; adding it to a QUBO energy gives the sparse-coding energy.
  double const_offset = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(h.size()); }

  void validate() const {
    if (Q.rows() != h.size() || Q.cols() != h.size()) throw DimensionError("Q must be N_q x N_q");
    if (!h.allFinite() || !Q.allFinite()) throw DomainError("QUBO coefficients must be finite");
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      if (Q(i, i) != 0.0) throw DomainError("Q diagonal must be zero");
      for (Eigen::Index j = i + 1; j < Q.cols(); ++j)
        if (Q(i, j) != Q(j, i)) throw DomainError("Q must be symmetric");
    }
  }
};

constexpr double kUnitNormTolerance = 1e-6;

/// Sparse-coding problem -> QUBO: h = -phi^T X + (lambda + 1/2),
/// Q = phi^T phi with the diagonal removed.
inline QuboProblem to_qubo(const Dictionary& dict, const Vector& x, double lambda) {
  if (x.size() != dict.dim()) throw DimensionError("signal dimension does not match dictionary");
  if (dict.max_norm_deviation() > kUnitNormTolerance) throw NormalizationError("dictionary columns are not unit norm");
  const Matrix& phi = dict.atoms();
  QuboProblem p;
  p.h = (-(phi.transpose() * x)).array() + (lambda + 0.5);
  p.Q = phi.transpose() * phi;
  // Symmetrize exactly; the product is symmetric only up to rounding.
  for (Eigen::Index i = 0; i < p.Q.rows(); ++i) {
    p.Q(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < p.Q.cols(); ++j) p.Q(j, i) = p.Q(i, j);
  }
  p.lambda = lambda;
  p.const_offset = 0.5 * x.squaredNorm();
  return p;
}

inline double qubo_energy(const QuboProblem& p, const BinaryState& a) {
  if (a.size() != p.size()) throw DimensionError("state length does not match problem size");
  double e = 0.0;
  const auto n = static_cast<Eigen::Index>(a.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!a[static_cast<std::size_t>(i)]) continue;
    e += p.h[i];
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (a[static_cast<std::size_t>(j)]) e += p.Q(i, j);
  }
  return e;
}

/// 0.5 * ||X - phi a||^2 + lambda * ||a||_0
inline double sc_energy(const Dictionary& dict, const Vector& x, const BinaryState& a, double lambda) {
  if (x.size() != dict.dim()) throw DimensionError("signal dimension does not match dictionary");
  if (a.size() != static_cast<std::size_t>(dict.size())) throw DimensionError("code length does not match dictionary");
  return 0.5 * (x - dict.atoms() * to_vector(a)).squaredNorm() + lambda * static_cast<double>(count_active(a));
}

inline double reconstruction_error(const Dictionary& dict, const Vector& x, const BinaryState& a) {
  return sc_energy(dict, x, a, 0.0);
}

/// Text form: "N_q lambda const_offset", then "i h_i" per variable, then
/// "i j Q_ij" for each nonzero pair with i < j.
inline std::string format_qubo(const QuboProblem& p) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << p.size() << ' ' << p.lambda << ' ' << p.const_offset << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) out << i << ' ' << p.h[static_cast<Eigen::Index>(i)] << '\n';
  for (Eigen::Index i = 0; i < p.Q.rows(); ++i)
    for (Eigen::Index j = i + 1; j < p.Q.cols(); ++j)
      if (p.Q(i, j) != 0.0) out << i << ' ' << j << ' ' << p.Q(i, j) << '\n';
  return out.str();
}

inline QuboProblem parse_qubo(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  QuboProblem p;
  if (!(in >> n >> p.lambda >> p.const_offset)) throw FormatError("bad QUBO header");
  p.h = Vector::Zero(static_cast<Eigen::Index>(n));
  p.Q = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::string line;
  std::getline(in, line);
  std::size_t biases = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::vector<double> v;
    double x;
    while (fields >> x) v.push_back(x);
    if (v.size() == 2) {
      const auto i = static_cast<Eigen::Index>(v[0]);
      if (v[0] < 0 || i >= p.h.size()) throw FormatError("bias index out of range");
      p.h[i] = v[1];
      ++biases;
    } else if (v.size() == 3) {
      const auto i = static_cast<Eigen::Index>(v[0]);
      const auto j = static_cast<Eigen::Index>(v[1]);
      if (v[0] < 0 || v[1] < 0 || i >= j || j >= p.h.size()) throw FormatError("coupling index out of range");
      p.Q(i, j) = p.Q(j, i) = v[2];
    } else {
      throw FormatError("bad QUBO line: " + line);
    }
  }
  if (biases != n) throw FormatError("expected " + std::to_string(n) + " bias lines");
  return p;
}

}  // namespace qsc
