#pragma once

#include "qsc/common.hpp"
#include "qsc/qubo.hpp"
#include "qsc/solvers.hpp"

#include <algorithm>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qsc {

using QubitId = int;

/// Chimera topology: a rows x cols grid of K_{shore,shore} unit cells.
///
/// Qubit (r, c, u, k) has id ((r*cols + c)*2 + u)*shore + k, with u = 0 for
/// vertically and u = 1 for horizontally oriented qubits. Vertical qubits
/// couple to the same index in the cells above and below, horizontal qubits
/// to the cells left and right.
class ChimeraGraph {
 public:
  ChimeraGraph(int rows, int cols, int shore, std::set<QubitId> disabled = {})
      : rows_(rows), cols_(cols), shore_(shore), disabled_(std::move(disabled)) {
    if (rows < 1 || cols < 1 || shore < 1) throw DomainError("chimera dimensions must be >= 1");
    for (QubitId q : disabled_) {
      if (q < 0 || q >= id_count()) throw DomainError("disabled qubit " + std::to_string(q) + " out of range");
    }
    adjacency_.resize(static_cast<std::size_t>(id_count()));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        for (int k = 0; k < shore; ++k) {
          for (int k2 = 0; k2 < shore; ++k2) add_edge(id(r, c, 0, k), id(r, c, 1, k2));
          if (r + 1 < rows) add_edge(id(r, c, 0, k), id(r + 1, c, 0, k));
          if (c + 1 < cols) add_edge(id(r, c, 1, k), id(r, c + 1, 1, k));
        }
      }
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
    std::sort(edges_.begin(), edges_.end());
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int shore() const { return shore_; }
  const std::set<QubitId>& disabled() const { return disabled_; }

  /// Size of the id space, including disabled qubits.
  int id_count() const { return rows_ * cols_ * 2 * shore_; }
  /// Working qubits.
  int qubit_count() const { return id_count() - static_cast<int>(disabled_.size()); }

  QubitId id(int r, int c, int u, int k) const { return ((r * cols_ + c) * 2 + u) * shore_ + k; }
  bool working(QubitId q) const { return q >= 0 && q < id_count() && !disabled_.contains(q); }

  const std::vector<std::pair<QubitId, QubitId>>& edges() const { return edges_; }
  const std::vector<QubitId>& neighbors(QubitId q) const { return adjacency_.at(static_cast<std::size_t>(q)); }
  std::size_t degree(QubitId q) const { return neighbors(q).size(); }

  bool has_edge(QubitId a, QubitId b) const {
    if (!working(a) || !working(b)) return false;
    const auto& n = neighbors(a);
    return std::binary_search(n.begin(), n.end(), b);
  }

 private:
  void add_edge(QubitId a, QubitId b) {
    if (!working(a) || !working(b)) return;
    adjacency_[static_cast<std::size_t>(a)].push_back(b);
    adjacency_[static_cast<std::size_t>(b)].push_back(a);
    edges_.emplace_back(std::min(a, b), std::max(a, b));
  }

  int rows_, cols_, shore_;
  std::set<QubitId> disabled_;
  std::vector<std::vector<QubitId>> adjacency_;
  std::vector<std::pair<QubitId, QubitId>> edges_;
};

inline ChimeraGraph chimera_graph(int rows, int cols, int shore, std::set<QubitId> disabled = {}) {
  return ChimeraGraph(rows, cols, shore, std::move(disabled));
}

/// Logical variable i is represented by the physical qubits chains[i].
struct Embedding {
  std::vector<std::vector<QubitId>> chains;
  double chain_strength = 1.0;

  std::size_t size() const { return chains.size(); }

  /// All chain qubits in ascending id order; this is the variable order of
  /// problems produced by embed_qubo and of the states unembed consumes.
  std::vector<QubitId> physical_qubits() const {
    std::vector<QubitId> out;
    for (const auto& c : chains) out.insert(out.end(), c.begin(), c.end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct EmbeddingReport {
  bool disjoint = true;
  bool connected = true;
  bool working = true;  // no chain uses a disabled or out-of-range qubit
  std::size_t required_edges = 0;
  std::size_t covered_edges = 0;

  bool valid() const { return disjoint && connected && working && covered_edges == required_edges; }
};

/// Lowest (min id, max id) physical edge between two chains, if any.
inline std::optional<std::pair<QubitId, QubitId>> coupler_between(const ChimeraGraph& g, const std::vector<QubitId>& a,
                                                                  const std::vector<QubitId>& b) {
  std::optional<std::pair<QubitId, QubitId>> best;
  for (QubitId u : a)
    for (QubitId v : b)
      if (g.has_edge(u, v)) {
        std::pair<QubitId, QubitId> e{std::min(u, v), std::max(u, v)};
        if (!best || e < *best) best = e;
      }
  return best;
}

/// Checks disjointness, chain connectivity and coverage of `required` logical
/// edges (all pairs when empty) as independent assertions.
inline EmbeddingReport validate_embedding(const Embedding& e, const ChimeraGraph& g,
                                          std::vector<std::pair<std::size_t, std::size_t>> required = {}) {
  EmbeddingReport report;
  std::set<QubitId> seen;
  for (const auto& chain : e.chains) {
    if (chain.empty()) report.connected = false;
    for (QubitId q : chain) {
      if (!g.working(q)) report.working = false;
      if (!seen.insert(q).second) report.disjoint = false;
    }
    if (chain.empty() || !report.working) continue;
    std::set<QubitId> members(chain.begin(), chain.end());
    std::set<QubitId> reached{chain.front()};
    std::queue<QubitId> todo;
    todo.push(chain.front());
    while (!todo.empty()) {
      const QubitId q = todo.front();
      todo.pop();
      for (QubitId nb : g.neighbors(q))
        if (members.contains(nb) && reached.insert(nb).second) todo.push(nb);
    }
    if (reached.size() != members.size()) report.connected = false;
  }
  if (required.empty()) {
    for (std::size_t i = 0; i < e.size(); ++i)
      for (std::size_t j = i + 1; j < e.size(); ++j) required.emplace_back(i, j);
  }
  report.required_edges = required.size();
  if (!report.working) return report;
  for (auto [i, j] : required) {
    if (i < e.size() && j < e.size() && coupler_between(g, e.chains[i], e.chains[j])) ++report.covered_edges;
  }
  return report;
}

namespace detail {

/// Triangle clique layout on an m x m block at (row0, col0). Variable
/// (b, k) takes the vertical qubits of column b in rows 0..b and the
/// horizontal qubits of row b in columns b..m-1, index k in each cell. The
/// two legs meet in cell (b, b). Flips mirror the block.
inline std::vector<std::vector<QubitId>> triangle_chains(const ChimeraGraph& g, int m, int row0, int col0, bool flip_rows,
                                                        bool flip_cols) {
  auto cell_row = [&](int r) { return row0 + (flip_rows ? m - 1 - r : r); };
  auto cell_col = [&](int c) { return col0 + (flip_cols ? m - 1 - c : c); };
  std::vector<std::vector<QubitId>> chains;
  for (int b = 0; b < m; ++b) {
    for (int k = 0; k < g.shore(); ++k) {
      std::vector<QubitId> chain;
      for (int r = 0; r <= b; ++r) chain.push_back(g.id(cell_row(r), cell_col(b), 0, k));
      for (int c = b; c < m; ++c) chain.push_back(g.id(cell_row(b), cell_col(c), 1, k));
      if (std::all_of(chain.begin(), chain.end(), [&](QubitId q) { return g.working(q); })) {
        std::sort(chain.begin(), chain.end());
        chains.push_back(std::move(chain));
      }
    }
  }
  return chains;
}

}  // namespace detail

/// Deterministic clique embedding: tries triangle layouts on the smallest
/// square blocks first (shortest chains), at every offset and mirror image,
/// dropping chains that touch disabled qubits.
inline Embedding embed_clique(std::size_t n, const ChimeraGraph& g, double chain_strength = 1.0) {
  Embedding e{{}, chain_strength};
  if (n == 0) return e;
  const int max_m = std::min(g.rows(), g.cols());
  const int min_m = static_cast<int>((n + static_cast<std::size_t>(g.shore()) - 1) / static_cast<std::size_t>(g.shore()));
  std::size_t best = 0;
  for (int m = 1; m <= max_m; ++m) {
    for (int r0 = 0; r0 + m <= g.rows(); ++r0) {
      for (int c0 = 0; c0 + m <= g.cols(); ++c0) {
        for (int flip = 0; flip < 4; ++flip) {
          auto chains = detail::triangle_chains(g, m, r0, c0, flip & 1, flip & 2);
          best = std::max(best, chains.size());
          if (m >= min_m && chains.size() >= n) {
            chains.resize(n);
            e.chains = std::move(chains);
            return e;
          }
        }
      }
    }
  }
  throw EmbeddingError("cannot embed K_" + std::to_string(n) + "; max achievable clique size is " +
                       std::to_string(best));
}

/// Conservative default: 2 * max(|h|_inf, |Q|_inf) * N_q.
inline double default_chain_strength(const QuboProblem& p) {
  const double hmax = p.h.size() ? p.h.cwiseAbs().maxCoeff() : 0.0;
  const double qmax = p.Q.size() ? p.Q.cwiseAbs().maxCoeff() : 0.0;
  return 2.0 * std::max(hmax, qmax) * static_cast<double>(p.size());
}

/// Maps a logical QUBO onto the chain qubits. Variable order follows
/// Embedding::physical_qubits(). Logical biases are split evenly over each
/// chain, each logical coupling sits on the lowest-id physical edge between
/// the two chains, and every chain edge (u, v) gets the penalty
/// s * (a_u + a_v - 2 a_u a_v), which vanishes exactly when the two bits agree.
inline QuboProblem embed_qubo(const QuboProblem& p, const Embedding& e, const ChimeraGraph& g) {
  if (e.size() != p.size()) throw EmbeddingError("embedding covers " + std::to_string(e.size()) + " variables, problem has " +
                                                 std::to_string(p.size()));
  const auto qubits = e.physical_qubits();
  auto index = [&](QubitId q) {
    return static_cast<Eigen::Index>(std::lower_bound(qubits.begin(), qubits.end(), q) - qubits.begin());
  };
  const auto n = static_cast<Eigen::Index>(qubits.size());
  QuboProblem out;
  out.h = Vector::Zero(n);
  out.Q = Matrix::Zero(n, n);
  out.lambda = p.lambda;
  out.const_offset = p.const_offset;

  const double s = e.chain_strength;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto& chain = e.chains[i];
    if (chain.empty()) throw EmbeddingError("empty chain for variable " + std::to_string(i));
    const double share = p.h[static_cast<Eigen::Index>(i)] / static_cast<double>(chain.size());
    for (QubitId q : chain) out.h[index(q)] += share;
    for (std::size_t a = 0; a < chain.size(); ++a)
      for (std::size_t b = a + 1; b < chain.size(); ++b)
        if (g.has_edge(chain[a], chain[b])) {
          const auto u = index(chain[a]);
          const auto v = index(chain[b]);
          out.h[u] += s;
          out.h[v] += s;
          out.Q(u, v) -= 2.0 * s;
          out.Q(v, u) -= 2.0 * s;
        }
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double q = p.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (q == 0.0) continue;
      const auto edge = coupler_between(g, e.chains[i], e.chains[j]);
      if (!edge) {
        throw EmbeddingError("no physical coupler between chains " + std::to_string(i) + " and " + std::to_string(j));
      }
      const auto u = index(edge->first);
      const auto v = index(edge->second);
      out.Q(u, v) += q;
      out.Q(v, u) += q;
    }
  }
  return out;
}

/// Majority vote per chain (an exact tie decodes to 0), then re-evaluation on
/// the logical problem.
inline BinaryState unembed_state(const BinaryState& physical, const Embedding& e) {
  const auto qubits = e.physical_qubits();
  if (physical.size() != qubits.size()) {
    throw ConsistencyError("physical state has " + std::to_string(physical.size()) + " bits, embedding uses " +
                           std::to_string(qubits.size()) + " qubits");
  }
  BinaryState logical(e.size(), 0);
  for (std::size_t i = 0; i < e.size(); ++i) {
    std::size_t ones = 0;
    for (QubitId q : e.chains[i]) {
      const auto idx = static_cast<std::size_t>(std::lower_bound(qubits.begin(), qubits.end(), q) - qubits.begin());
      ones += physical[idx];
    }
    logical[i] = 2 * ones > e.chains[i].size() ? 1 : 0;
  }
  return logical;
}

inline SolutionSpectrum unembed(const SolutionSpectrum& physical, const Embedding& e, const QuboProblem& logical) {
  std::vector<BinaryState> candidates;
  candidates.reserve(physical.size());
  for (const auto& s : physical.states) candidates.push_back(unembed_state(s.state, e));
  return make_spectrum(logical, std::move(candidates), 0, physical.read_count);
}

/// One line per logical variable: "i: q1 q2 ...".
inline std::string format_embedding(const Embedding& e) {
  std::ostringstream out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    out << i << ':';
    for (QubitId q : e.chains[i]) out << ' ' << q;
    out << '\n';
  }
  return out.str();
}

inline Embedding parse_embedding(const std::string& text, double chain_strength = 1.0) {
  Embedding e{{}, chain_strength};
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError("embedding line without ':'");
    const auto i = static_cast<std::size_t>(std::stoul(line.substr(0, colon)));
    if (i != e.chains.size()) throw FormatError("embedding lines must be in variable order");
    std::istringstream qs(line.substr(colon + 1));
    std::vector<QubitId> chain;
    QubitId q;
    while (qs >> q) chain.push_back(q);
    e.chains.push_back(std::move(chain));
  }
  return e;
}

}  // namespace qsc
