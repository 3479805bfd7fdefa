#pragma once

#include "qsc/common.hpp"
#include "qsc/dictionary.hpp"
#include "qsc/qubo.hpp"

#include <bit>
#include <cmath>
#include <iomanip>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace qsc {

struct Solution {
  BinaryState state;
  double energy = 0.0;
};

/// Distinct low-energy states sorted by energy, ties in lexicographic state
/// order (all-zeros first).
struct SolutionSpectrum {
  std::vector<Solution> states;
  std::size_t read_count = 0;

  std::size_t size() const { return states.size(); }
  bool empty() const { return states.empty(); }
  const Solution& ground() const {
    if (states.empty()) throw DomainError("empty spectrum");
    return states.front();
  }
};

inline bool solution_less(const Solution& a, const Solution& b) {
  if (a.energy != b.energy) return a.energy < b.energy;
  return a.state < b.state;
}

/// Deduplicates `candidates`, re-evaluates their energies exactly on `p`,
/// sorts, and keeps the lowest `keep` (0 keeps everything).
inline SolutionSpectrum make_spectrum(const QuboProblem& p, std::vector<BinaryState> candidates, std::size_t keep,
                                      std::size_t read_count) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  SolutionSpectrum s;
  s.read_count = read_count;
  s.states.reserve(candidates.size());
  for (auto& c : candidates) {
    const double e = qubo_energy(p, c);
    s.states.push_back({std::move(c), e});
  }
  std::sort(s.states.begin(), s.states.end(), solution_less);
  if (keep > 0 && s.states.size() > keep) s.states.resize(keep);
  return s;
}

inline constexpr std::size_t kExhaustiveCap = 25;

/// Enumerates all 2^N states in Gray-code order with incremental local fields.
inline SolutionSpectrum solve_exhaustive(const QuboProblem& p, std::size_t keep) {
  const std::size_t n = p.size();
  if (n > kExhaustiveCap) {
    throw CapacityError("exhaustive solver supports N_q <= " + std::to_string(kExhaustiveCap) + ", got " +
                        std::to_string(n));
  }
  if (keep == 0) keep = std::size_t{1} << n;
  // Extra slots absorb rounding in the incremental energies; the final
  // ordering uses exact re-evaluation.
  const std::size_t slots = keep + 64;

  auto lex_key = [n](std::uint32_t mask) {
    // a_0 is the most significant position of the lexicographic order
    std::uint32_t key = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) key |= 1u << (n - 1 - i);
    return key;
  };
  using Entry = std::pair<double, std::uint32_t>;  // energy, lexicographic key
  std::priority_queue<Entry> heap;  // max-heap: worst kept state on top
  auto offer = [&](double e, std::uint32_t mask) {
    Entry entry{e, lex_key(mask)};
    if (heap.size() < slots) {
      heap.push(entry);
    } else if (entry < heap.top()) {
      heap.pop();
      heap.push(entry);
    }
  };

  std::vector<double> field(p.h.data(), p.h.data() + n);
  std::uint32_t mask = 0;
  double energy = 0.0;
  offer(energy, mask);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    const auto i = static_cast<std::size_t>(std::countr_zero(k));
    const bool on = !(mask >> i & 1u);
    const double* qcol = p.Q.data() + static_cast<std::ptrdiff_t>(i * n);
    const double sign = on ? 1.0 : -1.0;
    energy += sign * field[i];
    for (std::size_t j = 0; j < n; ++j) field[j] += sign * qcol[j];
    mask ^= 1u << i;
    offer(energy, mask);
  }

  std::vector<BinaryState> candidates;
  candidates.reserve(heap.size());
  while (!heap.empty()) {
    const std::uint32_t key = heap.top().second;
    heap.pop();
    BinaryState a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = (key >> (n - 1 - i)) & 1u;
    candidates.push_back(std::move(a));
  }
  return make_spectrum(p, std::move(candidates), keep, 1);
}

struct AnnealConfig {
  std::size_t reads = 64;
  std::size_t sweeps = 200;
  double t_hot = 2.0;
  double t_cold = 0.05;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (reads < 1) throw ConfigError("reads must be >= 1");
    if (sweeps < 1) throw ConfigError("sweeps must be >= 1");
    if (!(t_cold > 0.0 && t_hot > t_cold)) throw ConfigError("temperatures must satisfy T_hot > T_cold > 0");
  }
};

namespace detail {

struct ReadResult {
  BinaryState final_state;
  BinaryState best_state;
};

inline ReadResult anneal_read(const QuboProblem& p, const std::vector<double>& betas, std::uint64_t seed) {
  const std::size_t n = p.size();
  std::mt19937_64 rng(seed);
  BinaryState a(n);
  for (auto& bit : a) bit = static_cast<std::uint8_t>(rng() >> 63);

  std::vector<double> field(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = p.h[static_cast<Eigen::Index>(i)];
    const double* qcol = p.Q.data() + static_cast<std::ptrdiff_t>(i * n);
    for (std::size_t j = 0; j < n; ++j)
      if (a[j]) f += qcol[j];
    field[i] = f;
    if (a[i]) energy += p.h[static_cast<Eigen::Index>(i)];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (a[i] && a[j]) energy += p.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

  ReadResult out{a, a};
  double best = energy;
  for (const double beta : betas) {
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = a[i] ? -field[i] : field[i];
      if (delta > 0.0 && uniform01(rng) >= std::exp(-beta * delta)) continue;
      const double sign = a[i] ? -1.0 : 1.0;
      a[i] ^= 1u;
      energy += delta;
      const double* qcol = p.Q.data() + static_cast<std::ptrdiff_t>(i * n);
      for (std::size_t j = 0; j < n; ++j) field[j] += sign * qcol[j];
      if (energy < best - 1e-12) {
        best = energy;
        out.best_state = a;
      }
    }
  }
  out.final_state = std::move(a);
  return out;
}

}  // namespace detail

/// Geometric inverse-temperature ladder from T_hot down to T_cold.
inline std::vector<double> anneal_schedule(const AnnealConfig& cfg) {
  std::vector<double> betas(cfg.sweeps);
  for (std::size_t k = 0; k < cfg.sweeps; ++k) {
    const double frac = cfg.sweeps == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(cfg.sweeps - 1);
    betas[k] = 1.0 / (cfg.t_hot * std::pow(cfg.t_cold / cfg.t_hot, frac));
  }
  return betas;
}

/// Metropolis simulated annealing with independent restarts. Read r uses a
/// generator seeded with seed + r, so the spectrum does not depend on the
/// worker count. Each read contributes its final state and the best state it
/// visited.
inline SolutionSpectrum solve_annealed(const QuboProblem& p, const AnnealConfig& cfg, std::size_t keep) {
  cfg.validate();
  const auto betas = anneal_schedule(cfg);
  std::vector<detail::ReadResult> reads(cfg.reads);
  parallel_for(cfg.reads, cfg.workers, [&](std::size_t r) { reads[r] = detail::anneal_read(p, betas, cfg.seed + r); });
  std::vector<BinaryState> candidates;
  candidates.reserve(2 * reads.size());
  for (auto& r : reads) {
    candidates.push_back(std::move(r.final_state));
    candidates.push_back(std::move(r.best_state));
  }
  return make_spectrum(p, std::move(candidates), keep, cfg.reads);
}

/// Greedy binary matching pursuit: repeatedly switches on the inactive atom
/// that most reduces 0.5 * ||r - phi_i||^2 and subtracts it from the residual.
inline BinaryState matching_pursuit(const Dictionary& dict, const Vector& x, std::size_t max_active) {
  if (x.size() != dict.dim()) throw DimensionError("signal dimension does not match dictionary");
  const auto n = static_cast<std::size_t>(dict.size());
  if (max_active > n) throw DomainError("k_max exceeds atom count");
  const Matrix& phi = dict.atoms();
  BinaryState a(n, 0);
  Vector residual = x;
  for (std::size_t step = 0; step < max_active; ++step) {
    const Vector score = phi.transpose() * residual;
    double best_gain = 0.0;
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i]) continue;
      const double gain = score[static_cast<Eigen::Index>(i)] - 0.5 * phi.col(static_cast<Eigen::Index>(i)).squaredNorm();
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    if (best == n) break;
    a[best] = 1;
    residual -= phi.col(static_cast<Eigen::Index>(best));
  }
  return a;
}

enum class SolverKind { exhaustive, anneal, matching_pursuit };

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::exhaustive: return "exhaustive";
    case SolverKind::anneal: return "anneal";
    case SolverKind::matching_pursuit: return "mp";
  }
  return "?";
}

inline SolverKind parse_solver_kind(const std::string& s) {
  if (s == "exhaustive") return SolverKind::exhaustive;
  if (s == "anneal") return SolverKind::anneal;
  if (s == "mp") return SolverKind::matching_pursuit;
  throw ConfigError("unknown solver '" + s + "' (expected exhaustive, anneal or mp)");
}

/// Solver handle used by the pipeline: maps (dictionary, signal, lambda) to a
/// spectrum of QUBO energies.
struct SparseSolver {
  SolverKind kind = SolverKind::anneal;
  AnnealConfig anneal;
  /// Activation budget for matching pursuit; 0 means the atom count.
  std::size_t mp_max_active = 0;

  /// `stream` decorrelates the annealer's seed between problems.
  SolutionSpectrum solve(const Dictionary& dict, const Vector& x, double lambda, std::size_t keep,
                         std::uint64_t stream = 0) const {
    return solve(to_qubo(dict, x, lambda), dict, x, keep, stream);
  }

  SolutionSpectrum solve(const QuboProblem& p, const Dictionary& dict, const Vector& x, std::size_t keep,
                         std::uint64_t stream) const {
    switch (kind) {
      case SolverKind::exhaustive:
        return solve_exhaustive(p, keep);
      case SolverKind::anneal: {
        AnnealConfig cfg = anneal;
        cfg.seed = derive_seed(anneal.seed, stream);
        cfg.workers = 1;
        return solve_annealed(p, cfg, keep);
      }
      case SolverKind::matching_pursuit: {
        const std::size_t k = mp_max_active == 0 ? static_cast<std::size_t>(dict.size()) : mp_max_active;
        return make_spectrum(p, {matching_pursuit(dict, x, k)}, 1, 1);
      }
    }
    throw ConfigError("unknown solver kind");
  }
};

/// CSV with header "rank,energy,bitstring".
inline std::string format_spectrum_csv(const SolutionSpectrum& s) {
  std::ostringstream out;
  out << std::setprecision(17) << "rank,energy,bitstring\n";
  for (std::size_t i = 0; i < s.states.size(); ++i)
    out << i << ',' << s.states[i].energy << ',' << to_bitstring(s.states[i].state) << '\n';
  return out.str();
}

}  // namespace qsc
