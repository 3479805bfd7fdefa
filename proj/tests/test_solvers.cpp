#include "qsc/solvers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace qsc;

namespace {

Dictionary random_dict(Eigen::Index d, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) m(i, j) = uniform01(rng) * 2.0 - 1.0;
  return Dictionary::from_columns(m);
}

Vector random_signal(Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  Vector x(d);
  for (auto& v : x) v = scale * (uniform01(rng) * 2.0 - 1.0);
  return x;
}

QuboProblem random_qubo(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QuboProblem p{Vector(static_cast<Eigen::Index>(n)), Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)), 0.0, 0.0};
  for (auto& v : p.h) v = uniform01(rng) * 2.0 - 1.0;
  for (Eigen::Index i = 0; i < p.Q.rows(); ++i)
    for (Eigen::Index j = i + 1; j < p.Q.cols(); ++j) p.Q(i, j) = p.Q(j, i) = uniform01(rng) * 2.0 - 1.0;
  return p;
}

QuboProblem two_variable() {
  QuboProblem p{Vector::Ones(2), Matrix::Zero(2, 2), 0.0, 0.0};
  p.Q(0, 1) = p.Q(1, 0) = 1.0;
  return p;
}

// Oracle: plain enumeration with a freshly written energy; returns the lowest energy.
double brute_force_ground(const QuboProblem& p) {
  const auto n = p.size();
  double best = 0.0;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!((m >> i) & 1u)) continue;
      e += p.h[static_cast<Eigen::Index>(i)];
      for (std::size_t j = i + 1; j < n; ++j)
        if ((m >> j) & 1u) e += p.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    best = std::min(best, e);
  }
  return best;
}

void expect_well_formed(const QuboProblem& p, const SolutionSpectrum& s) {
  ASSERT_FALSE(s.empty());
  std::set<BinaryState> seen;
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s.states[i].energy, qubo_energy(p, s.states[i].state), 1e-9);
    EXPECT_TRUE(seen.insert(s.states[i].state).second) << "duplicate state at rank " << i;
    if (i > 0) EXPECT_LE(s.states[i - 1].energy, s.states[i].energy);
  }
}

}  // namespace

TEST(Exhaustive, TwoVariableSpectrumAndTieOrder) {
  const auto s = solve_exhaustive(two_variable(), 4);
  ASSERT_EQ(s.size(), 4u);
  const std::vector<std::string> bits{"00", "01", "10", "11"};
  const std::vector<double> energies{0, 1, 1, 3};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(to_bitstring(s.states[i].state), bits[i]);
    EXPECT_EQ(s.states[i].energy, energies[i]);
  }
  EXPECT_EQ(s.read_count, 1u);
}

TEST(Exhaustive, KeepTruncatesAndZeroKeepsAll) {
  const auto p = random_qubo(8, 1);
  EXPECT_EQ(solve_exhaustive(p, 5).size(), 5u);
  const auto all = solve_exhaustive(p, 0);
  EXPECT_EQ(all.size(), 256u);
  expect_well_formed(p, all);
}

TEST(Exhaustive, ZeroSignalGroundStateIsEmpty) {
  const auto p = to_qubo(random_dict(36, 12, 2), Vector::Zero(36), 0.7);
  const auto s = solve_exhaustive(p, 3);
  EXPECT_EQ(count_active(s.ground().state), 0u);
  EXPECT_EQ(s.ground().energy, 0.0);
}

TEST(Exhaustive, MatchesIndependentEnumeration) {
  for (int inst = 0; inst < 20; ++inst) {
    const auto p = random_qubo(12, 10 + inst);
    const auto s = solve_exhaustive(p, 16);
    expect_well_formed(p, s);
    EXPECT_NEAR(s.ground().energy, brute_force_ground(p), 1e-12) << "instance " << inst;
  }
}

TEST(Exhaustive, CapacityCap) {
  EXPECT_THROW(solve_exhaustive(random_qubo(26, 3), 1), CapacityError);
}

TEST(Anneal, TwoVariableGroundState) {
  AnnealConfig c;
  c.reads = 50;
  const auto s = solve_annealed(two_variable(), c, 0);
  EXPECT_EQ(to_bitstring(s.ground().state), "00");
  EXPECT_EQ(s.ground().energy, 0.0);
  EXPECT_EQ(s.read_count, 50u);
}

TEST(Anneal, SameSeedSameSpectrumForAnyWorkerCount) {
  const auto p = to_qubo(random_dict(36, 47, 4), random_signal(36, 5), 0.5);
  AnnealConfig c;
  c.reads = 16;
  c.sweeps = 50;
  c.seed = 99;
  const auto a = solve_annealed(p, c, 0);
  const auto b = solve_annealed(p, c, 0);
  c.workers = 4;
  const auto d = solve_annealed(p, c, 0);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), d.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.states[i].state, b.states[i].state);
    EXPECT_EQ(a.states[i].state, d.states[i].state);
    EXPECT_EQ(a.states[i].energy, d.states[i].energy);
  }
  expect_well_formed(p, a);
  c.seed = 100;
  c.workers = 1;
  const auto e = solve_annealed(p, c, 0);
  bool differs = e.size() != a.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = e.states[i].state != a.states[i].state;
  EXPECT_TRUE(differs);
}

TEST(Anneal, NeverBeatsExhaustiveAndUsuallyMatches) {
  AnnealConfig c;
  int matches = 0;
  for (int inst = 0; inst < 30; ++inst) {
    const auto p = random_qubo(14, 200 + inst);
    c.seed = static_cast<std::uint64_t>(inst);
    const auto a = solve_annealed(p, c, 4);
    const auto x = solve_exhaustive(p, 1);
    expect_well_formed(p, a);
    EXPECT_GE(a.ground().energy, x.ground().energy - 1e-9);
    if (a.ground().energy <= x.ground().energy + 1e-9) ++matches;
  }
  EXPECT_GE(matches, 28);
}

TEST(Anneal, ScheduleIsGeometric) {
  AnnealConfig c;
  c.sweeps = 5;
  c.t_hot = 2.0;
  c.t_cold = 0.125;
  const auto betas = anneal_schedule(c);
  ASSERT_EQ(betas.size(), 5u);
  const std::vector<double> temps{2.0, 1.0, 0.5, 0.25, 0.125};
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(1.0 / betas[k], temps[k], 1e-12);
}

TEST(Anneal, ConfigValidation) {
  AnnealConfig c;
  EXPECT_NO_THROW(c.validate());
  c.reads = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.reads = 1;
  c.t_cold = 3.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.t_cold = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(solve_annealed(two_variable(), c, 1), ConfigError);
}

TEST(MatchingPursuit, ExactAtomStopsAfterOneStep) {
  const auto d = random_dict(36, 47, 6);
  const auto a = matching_pursuit(d, d.atoms().col(3), 5);
  EXPECT_EQ(count_active(a), 1u);
  EXPECT_EQ(a[3], 1);
  EXPECT_NEAR(reconstruction_error(d, d.atoms().col(3), a), 0.0, 1e-20);
}

TEST(MatchingPursuit, ZeroSignalGivesZeroCode) {
  EXPECT_EQ(count_active(matching_pursuit(random_dict(36, 47, 7), Vector::Zero(36), 47)), 0u);
}

TEST(MatchingPursuit, ResidualStrictlyFallsAndBudgetHolds) {
  const auto d = random_dict(36, 47, 8);
  for (int inst = 0; inst < 50; ++inst) {
    const Vector x = random_signal(36, 300 + inst, 1.5);
    double previous = reconstruction_error(d, x, BinaryState(47, 0));
    std::size_t previous_active = 0;
    for (std::size_t k = 1; k <= 10; ++k) {
      const auto a = matching_pursuit(d, x, k);
      EXPECT_LE(count_active(a), k);
      const double err = reconstruction_error(d, x, a);
      if (count_active(a) > previous_active) {
        EXPECT_LT(err, previous);
      } else {
        EXPECT_EQ(err, previous);  // stopped early: no atom helps
      }
      previous = err;
      previous_active = count_active(a);
    }
  }
  EXPECT_THROW(matching_pursuit(d, Vector::Zero(35), 3), DimensionError);
}

TEST(MatchingPursuit, GreedyChoiceMaximizesGain) {
  const auto d = random_dict(36, 47, 9);
  const Vector x = random_signal(36, 10, 2.0);
  const auto a = matching_pursuit(d, x, 1);
  const Vector gain = (d.atoms().transpose() * x).array() - 0.5;
  Eigen::Index best;
  gain.maxCoeff(&best);
  EXPECT_EQ(a[static_cast<std::size_t>(best)], 1);
}

TEST(MatchingPursuit, AnnealerWinsAtMatchedSparsity) {
  const auto d = random_dict(36, 47, 11);
  SparseSolver annealer;
  annealer.anneal.reads = 16;
  annealer.anneal.sweeps = 100;
  int annealer_not_worse = 0;
  const int trials = 200;
  for (int inst = 0; inst < trials; ++inst) {
    const Vector x = random_signal(36, 1000 + inst, 1.0);
    const double lambda = 0.3;
    const auto a = annealer.solve(d, x, lambda, 1, static_cast<std::uint64_t>(inst)).ground().state;
    const auto m = matching_pursuit(d, x, count_active(a));
    if (sc_energy(d, x, a, lambda) <= sc_energy(d, x, m, lambda) + 1e-12) ++annealer_not_worse;
  }
  EXPECT_GT(annealer_not_worse, trials / 2);
}

TEST(SparseSolver, KindsAndStreams) {
  EXPECT_EQ(parse_solver_kind("exhaustive"), SolverKind::exhaustive);
  EXPECT_EQ(parse_solver_kind("anneal"), SolverKind::anneal);
  EXPECT_EQ(parse_solver_kind("mp"), SolverKind::matching_pursuit);
  EXPECT_EQ(to_string(SolverKind::matching_pursuit), "mp");
  EXPECT_THROW(parse_solver_kind("qpu"), ConfigError);

  const auto d = random_dict(36, 10, 12);
  const Vector x = random_signal(36, 13);
  SparseSolver s;
  s.anneal.reads = 4;
  const auto a = s.solve(d, x, 0.2, 0, 1);
  const auto b = s.solve(d, x, 0.2, 0, 1);
  EXPECT_EQ(a.states.size(), b.states.size());
  EXPECT_EQ(a.ground().state, b.ground().state);

  s.kind = SolverKind::matching_pursuit;
  const auto mp = s.solve(d, x, 0.2, 0, 0);
  EXPECT_EQ(mp.size(), 1u);
  EXPECT_EQ(mp.ground().state, matching_pursuit(d, x, 10));
}

TEST(SpectrumCsv, Format) {
  const auto s = solve_exhaustive(two_variable(), 2);
  EXPECT_EQ(format_spectrum_csv(s), "rank,energy,bitstring\n0,0,00\n1,1,01\n");
}
