#pragma once

#include "qsc/common.hpp"
#include "qsc/dictionary.hpp"
#include "qsc/qubo.hpp"
#include "qsc/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace qsc {

/// Z = scaled * exp(-beta * shift) with shift = E_min, so scaled lies in [1, N_s].
struct PartitionFunction {
  double scaled = 0.0;
  double shift = 0.0;

  double log_z(double beta) const { return std::log(scaled) - beta * shift; }
};

inline PartitionFunction partition_function(std::span<const double> energies, double beta) {
  if (energies.empty()) throw DomainError("partition function of an empty spectrum");
  if (!(beta > 0.0)) throw DomainError("beta must be > 0");
  const double e_min = *std::min_element(energies.begin(), energies.end());
  double z = 0.0;
  for (double e : energies) z += std::exp(-beta * (e - e_min));
  return {z, e_min};
}

inline std::vector<double> energies_of(const SolutionSpectrum& s, double offset = 0.0) {
  std::vector<double> out;
  out.reserve(s.size());
  for (const auto& st : s.states) out.push_back(st.energy + offset);
  return out;
}

inline PartitionFunction partition_function(const SolutionSpectrum& s, double beta) {
  return partition_function(energies_of(s), beta);
}

/// F = -(1/beta) log Z = E_min - (1/beta) log Z'.
inline double free_energy(std::span<const double> energies, double beta) {
  const auto z = partition_function(energies, beta);
  return z.shift - std::log(z.scaled) / beta;
}

inline double free_energy(const SolutionSpectrum& s, double beta) { return free_energy(energies_of(s), beta); }

inline constexpr double kDefaultBeta = 100.0;

struct LambdaPoint {
  double lambda = 0.0;
  double e_min = 0.0;        // sparse-coding scale (QUBO energy + 0.5||X||^2)
  double free_energy = 0.0;  // same scale
  std::size_t n_states = 0;
  double recon_error = 0.0;  // 0.5 ||X - phi a||^2 of the lowest state
  double sparsity = 0.0;     // active fraction of the lowest state
};

struct LambdaCurve {
  std::vector<LambdaPoint> points;
  std::size_t reads = 0;

  /// Index of the smallest reconstruction error (first one on ties).
  std::size_t recon_argmin() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
      if (points[i].recon_error < points[best].recon_error) best = i;
    return best;
  }
};

inline std::vector<double> lambda_grid(double first, double last, double step) {
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::llround((last - first) / step));
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(first + step * static_cast<double>(i));
  return grid;
}

/// Rebuilds the QUBO at every lambda and summarizes the solver's spectrum.
/// All grid points share one solver stream, so annealer randomness is common
/// across the curve.
inline LambdaCurve lambda_sweep(const Vector& x, const Dictionary& dict, const std::vector<double>& grid,
                                const SparseSolver& solver, double beta = kDefaultBeta, unsigned workers = 1) {
  if (grid.size() < 5) throw DomainError("lambda grid needs at least 5 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw DomainError("lambda grid must be strictly ascending");
  LambdaCurve curve;
  curve.points.resize(grid.size());
  curve.reads = solver.kind == SolverKind::anneal ? solver.anneal.reads : 1;
  parallel_for(grid.size(), workers, [&](std::size_t i) {
    const double lambda = grid[i];
    const QuboProblem p = to_qubo(dict, x, lambda);
    SolutionSpectrum s;
    try {
      s = solver.solve(p, dict, x, 0, 0);
    } catch (const Error& e) {
      throw Error("lambda " + std::to_string(lambda) + ": " + e.what());
    }
    const auto energies = energies_of(s, p.const_offset);
    const auto& ground = s.ground().state;
    curve.points[i] = {lambda,
                       energies.front(),
                       free_energy(energies, beta),
                       s.size(),
                       reconstruction_error(dict, x, ground),
                       static_cast<double>(count_active(ground)) / static_cast<double>(ground.size())};
  });
  return curve;
}

struct SecondDerivative {
  std::vector<double> lambda;  // interior grid points
  std::vector<double> value;   // d2F/dlambda2
  std::size_t peak = 0;        // index into the curve of max |d2F/dlambda2|

  double peak_lambda(const LambdaCurve& curve) const { return curve.points[peak].lambda; }
};

/// Central second differences of F on a uniform grid.
inline SecondDerivative second_derivative(const LambdaCurve& curve) {
  const auto& pts = curve.points;
  if (pts.size() < 3) throw DomainError("second derivative needs at least 3 points");
  const double h = (pts.back().lambda - pts.front().lambda) / static_cast<double>(pts.size() - 1);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (std::abs(pts[i].lambda - pts[i - 1].lambda - h) > 1e-6 * std::abs(h)) {
      throw DomainError("lambda grid is not uniform");
    }
  }
  SecondDerivative d;
  double best = -1.0;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const double v = (pts[i - 1].free_energy - 2.0 * pts[i].free_energy + pts[i + 1].free_energy) / (h * h);
    d.lambda.push_back(pts[i].lambda);
    d.value.push_back(v);
    if (std::abs(v) > best) {
      best = std::abs(v);
      d.peak = i;
    }
  }
  return d;
}

/// CSV header: lambda,E_min,F,N_s,recon_error,sparsity
inline std::string format_curve_csv(const LambdaCurve& curve) {
  std::ostringstream out;
  out << std::setprecision(17) << "lambda,E_min,F,N_s,recon_error,sparsity\n";
  for (const auto& p : curve.points)
    out << p.lambda << ',' << p.e_min << ',' << p.free_energy << ',' << p.n_states << ',' << p.recon_error << ','
        << p.sparsity << '\n';
  return out.str();
}

}  // namespace qsc
