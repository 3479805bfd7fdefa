// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "qsc/qsc.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace qsc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string pct(double v) { return fixed(100.0 * v) + "%"; }

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

void note(const std::string& text) { std::cout << "    " << text << std::endl; }

Dictionary random_dict(Eigen::Index d, Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(d, n);
  for (auto& v : m.reshaped()) v = g(rng);
  return Dictionary::from_columns(m);
}

QuboProblem random_qubo(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QuboProblem p{Vector(n), Matrix::Zero(n, n), 0.0, 0.0};
  for (auto& v : p.h) v = u(rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p.Q(i, j) = p.Q(j, i) = u(rng);
  return p;
}

// Sparse-coding objective written out coordinate by coordinate.
double direct_energy(const Matrix& phi, const Vector& x, const BinaryState& a, double lambda) {
  double err = 0.0;
  for (Eigen::Index r = 0; r < phi.rows(); ++r) {
    double rec = 0.0;
    for (Eigen::Index j = 0; j < phi.cols(); ++j)
      if (a[static_cast<std::size_t>(j)]) rec += phi(r, j);
    err += (x[r] - rec) * (x[r] - rec);
  }
  return 0.5 * err + lambda * static_cast<double>(count_active(a));
}

// ---------------------------------------------------------------------------
// Shared pipeline state, built with the CLI defaults.

struct Run {
  ImageSet images;
  Dictionary dictionary;  // learned patch dictionary
};

const RunConfig& defaults() {
  static const RunConfig cfg;
  return cfg;
}

const ImageSet& downsampled() {
  static const ImageSet set = [] {
    const fs::path dir = QSC_DATA_DIR;
    return downsample(load_idx(dir / defaults().images_file, dir / defaults().labels_file).head(4000));
  }();
  return set;
}

// Unsupervised stages only see the images the classifier trains on.
ImageSet training_part(const ImageSet& set) { return set.head(split_5_1(set.size()).train); }

ImageSet reduced_images(std::size_t n) {
  const auto& cfg = defaults();
  const auto set = downsampled().head(n);
  AutoencoderConfig ac;
  ac.epochs = cfg.ae_epochs;
  ac.seed = cfg.autoencoder_seed();
  return standardize(reduce(train_autoencoder(training_part(set), ac).model, set), cfg.contrast);
}

Dictionary learned(const Dictionary& init, const ImageSet& images, double lambda) {
  const auto& cfg = defaults();
  LearnConfig lc{cfg.learn_lr, cfg.learn_momentum, cfg.learn_batch, cfg.learn_steps, cfg.learn_seed(), 1};
  return learn(init, training_part(images), lc, cfg.sparse_solver(), lambda).dictionary;
}

const Run& run_of(std::size_t n) {
  static std::map<std::size_t, Run> runs;
  auto it = runs.find(n);
  if (it == runs.end()) {
    const auto& cfg = defaults();
    auto images = reduced_images(n);
    auto dict = learned(imprint(training_part(images), cfg.atoms, kPatchSize, cfg.imprint_seed()), images, cfg.lambda);
    it = runs.emplace(n, Run{std::move(images), std::move(dict)}).first;
  }
  return it->second;
}

const std::vector<FeatureMap>& encoded(std::size_t n, double lambda) {
  static std::map<std::pair<std::size_t, double>, std::vector<FeatureMap>> cache;
  const auto key = std::make_pair(n, lambda);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const auto& run = run_of(n);
    it = cache.emplace(key, encode_dataset(run.images, run.dictionary, lambda, defaults().sparse_solver())).first;
  }
  return it->second;
}

struct Score {
  double train = 0.0;
  double test = 0.0;
};

Score svm_score(const LabeledFeatures& rows, const LabeledFeatures* train_override = nullptr) {
  const auto& cfg = defaults();
  const auto split = split_5_1(rows.size());
  const auto train = train_override ? *train_override : slice(rows, 0, split.train);
  const auto test = slice(rows, split.train, rows.size());
  const auto fit = train_svm(train, SvmConfig{cfg.svm_epochs, cfg.svm_lr, cfg.svm_reg, cfg.classifier_seed()});
  return {accuracy(fit.model, train), accuracy(fit.model, test)};
}

// The undercomplete run: learned whole-image dictionary over the 2K set.
const Dictionary& whole_dictionary() {
  static const Dictionary d = [] {
    const auto& cfg = defaults();
    const auto& images = run_of(2000).images;
    return learned(imprint(training_part(images), cfg.atoms, std::nullopt, cfg.imprint_seed()), images, 1.7);
  }();
  return d;
}

// ---------------------------------------------------------------------------

void energy_equivalence() {
  const auto t = Clock::now();
  std::mt19937_64 rng(101);
  std::size_t states = 0;
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto n = static_cast<std::size_t>(1 + inst % 12);
    const auto d = random_dict(36, static_cast<Eigen::Index>(n), rng);
    Vector x(36);
    for (auto& v : x) v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const double lambda = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    const auto p = to_qubo(d, x, lambda);
    const double half_norm = 0.5 * x.squaredNorm();
    BinaryState a(n);
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m, ++states) {
      for (std::size_t i = 0; i < n; ++i) a[i] = (m >> i) & 1u;
      const double gap = direct_energy(d.atoms(), x, a, lambda) - qubo_energy(p, a);
      worst = std::max(worst, std::abs(gap - half_norm));
    }
  }
  const double secs = seconds_since(t);
  verdict(1, worst <= 1e-9 && secs < 10.0,
          std::to_string(states) + " states, max deviation " + std::to_string(worst) + ", " + fixed(secs, 1) + " s");
}

void solver_agreement() {
  const auto t = Clock::now();
  std::mt19937_64 rng(202);
  AnnealConfig ac;
  ac.reads = 64;
  ac.sweeps = 200;
  int matched = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto p = random_qubo(16, rng);
    ac.seed = derive_seed(7, static_cast<std::uint64_t>(inst));
    const double exact = solve_exhaustive(p, 1).ground().energy;
    const double annealed = solve_annealed(p, ac, 1).ground().energy;
    if (std::abs(exact - annealed) <= 1e-9) ++matched;
  }
  const double secs = seconds_since(t);
  verdict(2, matched >= 95 && secs < 60.0, std::to_string(matched) + "/100 ground energies match, " + fixed(secs, 1) + " s");
}

void chimera_structure() {
  const auto g = chimera_graph(12, 12, 4);
  std::size_t max_degree = 0;
  for (QubitId q = 0; q < g.id_count(); ++q) max_degree = std::max(max_degree, g.degree(q));
  const auto cell = chimera_graph(1, 1, 4);
  std::size_t cell_edges = 0;
  for (QubitId q = 0; q < cell.id_count(); ++q) cell_edges += cell.degree(q);
  cell_edges /= 2;
  verdict(3, g.qubit_count() == 1152 && max_degree == 6 && cell_edges == 16,
          std::to_string(g.qubit_count()) + " qubits, max degree " + std::to_string(max_degree) + ", " +
              std::to_string(cell_edges) + " edges in one cell");
}

void clique_embedding() {
  const auto g = chimera_graph(12, 12, 4);
  bool embedded = false;
  EmbeddingReport report;
  std::size_t longest = 0;
  try {
    const auto e = embed_clique(47, g);
    report = validate_embedding(e, g);
    for (const auto& c : e.chains) longest = std::max(longest, c.size());
    embedded = true;
  } catch (const Error& e) {
    note(std::string("embed_clique(47) failed: ") + e.what());
  }
  std::mt19937_64 rng(404);
  int preserved = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const auto n = static_cast<std::size_t>(1 + inst % 8);
    const auto p = random_qubo(n, rng);
    const double strength = 2.0 * (p.h.cwiseAbs().sum() + 0.5 * p.Q.cwiseAbs().sum());
    const auto e = embed_clique(n, g, strength);
    const auto physical = embed_qubo(p, e, g);
    const auto direct = solve_exhaustive(p, 1).ground();
    const auto decoded = unembed(solve_exhaustive(physical, 1), e, p).ground();
    if (decoded.state == direct.state && std::abs(decoded.energy - direct.energy) <= 1e-9) ++preserved;
  }
  verdict(4, embedded && report.valid() && report.covered_edges == 1081 && preserved == 50,
          "K47 " + std::string(embedded && report.valid() ? "valid" : "invalid") + " with " +
              std::to_string(report.covered_edges) + "/1081 edges, chains of " + std::to_string(longest) +
              "; round trip " + std::to_string(preserved) + "/50");
}

void sparsity_calibration() {
  const std::vector<double> lambdas{1.5, 1.7, 2.0, 2.5, 3.0};
  const std::vector<double> targets{0.16, 0.13, 0.12, 0.09, 0.05};
  const auto images = run_of(2000).images.head(500);
  const auto solver = SparseSolver{SolverKind::anneal, AnnealConfig{}, 0};
  bool pass = true;
  std::string detail = "whole:";
  double previous = 2.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double s = mean_sparsity(encode_dataset(images, whole_dictionary(), lambdas[i], solver));
    pass = pass && s < previous && std::abs(s - targets[i]) <= 0.05;
    previous = s;
    detail += " " + fixed(lambdas[i], 1) + "->" + pct(s);
  }
  const double patch = mean_sparsity(encoded(2000, 0.7));
  pass = pass && std::abs(patch - 0.12) <= 0.04;
  verdict(5, pass, detail + "; patch 0.7->" + pct(patch));
}

void lambda_peak() {
  const auto t = Clock::now();
  const auto lambdas = defaults().lambda_list();
  std::size_t best = 0;
  std::vector<double> acc;
  std::string detail;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const auto& maps = encoded(2000, lambdas[i]);
    acc.push_back(svm_score(to_features(maps)).test);
    if (acc[i] > acc[best]) best = i;
    detail += fixed(lambdas[i], 1) + "->" + pct(acc[i]) + " (sparsity " + pct(mean_sparsity(maps)) + ") ";
  }
  const double secs = seconds_since(t);
  verdict(6, lambdas[best] == 0.7 && acc[best] >= 0.90 && secs < 1800.0,
          "peak at lambda " + fixed(lambdas[best], 1) + "; " + detail + fixed(secs, 0) + " s");
}

void size_insensitivity() {
  double lo = 1.0, hi = 0.0;
  std::string detail;
  for (std::size_t n : {1000u, 2000u, 4000u}) {
    const double a = svm_score(to_features(encoded(n, defaults().lambda))).test;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    detail += std::to_string(n) + "->" + pct(a) + " ";
  }
  verdict(7, 100.0 * (hi - lo) < 3.0, detail + "spread " + fixed(100.0 * (hi - lo)) + " points");
}

void pursuit_comparison() {
  const double lambda = defaults().lambda;
  const auto& run = run_of(2000);
  const auto& annealed = encoded(2000, lambda);
  std::vector<FeatureMap> pursuit;
  for (std::size_t i = 0; i < annealed.size(); ++i)
    pursuit.push_back(encode_image_matched_mp(run.images.images[i], run.dictionary, annealed[i]));
  std::size_t wins = 0, patches = 0;
  for (std::size_t i = 0; patches < 1000; ++i) {
    const auto tiles = tile(run.images.images[i], run.images.width, run.images.height);
    for (std::size_t k = 0; k < tiles.size() && patches < 1000; ++k, ++patches) {
      const auto r = static_cast<int>(k) / annealed[i].cols, c = static_cast<int>(k) % annealed[i].cols;
      const double ea = sc_energy(run.dictionary, tiles[k].pixels, annealed[i].code(r, c), lambda);
      const double em = sc_energy(run.dictionary, tiles[k].pixels, pursuit[i].code(r, c), lambda);
      if (ea <= em + 1e-12) ++wins;
    }
  }
  const double acc_a = svm_score(to_features(annealed)).test;
  const double acc_m = svm_score(to_features(pursuit)).test;
  verdict(8, wins >= 600 && acc_a >= acc_m,
          "annealed energy <= pursuit on " + std::to_string(wins) + "/1000 patches; SVM annealed " + pct(acc_a) +
              " vs pursuit " + pct(acc_m) + " (sparsity " + pct(mean_sparsity(annealed)) + " vs " +
              pct(mean_sparsity(pursuit)) + ")");
}

void augmentation() {
  const double lambda = 1.7;
  const auto& set = run_of(2000).images;
  const auto& dict = whole_dictionary();
  SparseSolver solver{SolverKind::anneal, AnnealConfig{}, 0};
  solver.anneal.seed = defaults().anneal_seed();
  const auto split = split_5_1(set.size());
  LabeledFeatures rows, train1, train30;
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto spectrum = encode_image_whole_spectrum(set.images[i], dict, lambda, solver, 30, i);
    const auto codes = augment(spectrum, 30);
    rows.push(to_vector(codes.front()), set.labels[i]);
    if (i >= split.train) continue;
    distinct += codes.size();
    train1.push(to_vector(codes.front()), set.labels[i]);
    for (const auto& c : codes) train30.push(to_vector(c), set.labels[i]);
  }
  const double k1 = svm_score(rows, &train1).test;
  const double k30 = svm_score(rows, &train30).test;
  verdict(9, 100.0 * (k30 - k1) >= 1.0,
          "k=1 " + pct(k1) + ", k=30 " + pct(k30) + " (gain " + fixed(100.0 * (k30 - k1)) + " points, " +
              fixed(static_cast<double>(distinct) / static_cast<double>(split.train), 1) + " codes per image)");
}

void thermodynamics() {
  const auto t = Clock::now();
  bool closed = true;
  closed = closed && std::abs(free_energy(std::vector<double>{3.5}, 100.0) - 3.5) <= 1e-9;
  closed = closed && std::abs(free_energy(std::vector<double>{0.0, 0.0}, 100.0) + std::log(2.0) / 100.0) <= 1e-9;
  closed = closed && std::abs(partition_function(std::vector<double>{0.0, 0.0}, 100.0).scaled - 2.0) <= 1e-9;
  std::mt19937_64 rng(1010);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<double> e(12);
    for (auto& v : e) v = std::uniform_real_distribution<double>(-0.25, 0.25)(rng);
    long double z = 0.0L;
    for (double v : e) z += std::exp(-100.0L * static_cast<long double>(v));
    closed = closed && std::abs(free_energy(e, 100.0) - static_cast<double>(-std::log(z) / 100.0L)) <= 1e-9;
  }
  SparseSolver solver{SolverKind::anneal, AnnealConfig{}, 0};
  solver.anneal.reads = 1000;
  solver.anneal.seed = defaults().anneal_seed();
  const auto grid = lambda_grid(0.5, 3.5, 0.1);
  const auto curve = lambda_sweep(run_of(2000).images.images[0], whole_dictionary(), grid, solver, kDefaultBeta);
  const auto d2 = second_derivative(curve);
  const auto peak = static_cast<long>(d2.peak);
  const auto recon = static_cast<long>(curve.recon_argmin());
  const double secs = seconds_since(t);
  verdict(10, closed && std::abs(peak - recon) <= 2 && secs < 900.0,
          std::string("closed forms ") + (closed ? "ok" : "wrong") + "; |d2F| peak at lambda " +
              fixed(d2.peak_lambda(curve), 1) + ", recon minimum at lambda " + fixed(curve.points[recon].lambda, 1) +
              ", " + fixed(secs, 0) + " s");
  std::string sparsity;
  for (std::size_t i = 0; i < curve.points.size(); i += 5)
    sparsity += " " + fixed(curve.points[i].lambda, 1) + ":" + pct(curve.points[i].sparsity);
  note("ground-state sparsity along the sweep:" + sparsity);
}

// ---------------------------------------------------------------------------

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(QSC_CLI_PATH) + " " + args + " >> " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string strip_timestamp(const std::string& text) {
  const auto at = text.rfind("timestamp=");
  return at == std::string::npos ? text : text.substr(0, at);
}

void determinism() {
  const auto root = fs::temp_directory_path() / "qsc_acceptance_determinism";
  fs::remove_all(root);
  const std::string base = " --data_dir " + std::string(QSC_DATA_DIR) +
                           " --limit 300 --ae_epochs 5 --learn_steps 5 --learn_batch 64 --reads 4 --sweeps 20"
                           " --lambdas 0.5,0.7 --lambda_min 0.5 --lambda_max 1.0 --augment_k 4 --workers 2";
  const std::vector<std::string> steps{
      "ingest",
      "autoencode",
      "imprint",
      "learn",
      "encode",
      "classify",
      "classify --classifier mlp --mlp_epochs 3",
      "sweep",
      "thermo",
      "embed",
      "imprint --dictionary_mode whole --dictionary whole.qscd",
      "augment --dictionary whole.qscd --lambda 1.7",
      "encode --dictionary dictionary_learned.qscd",
  };
  // Both passes write to the same directory so their configs match exactly.
  const auto out = root / "run";
  const auto first = root / "first";
  bool ran = true;
  for (int pass = 0; pass < 2; ++pass) {
    fs::create_directories(out);
    for (const auto& s : steps) {
      const auto space = s.find(' ');
      const auto cmd = s.substr(0, space);
      const auto rest = space == std::string::npos ? std::string() : s.substr(space);
      if (cli(cmd + base + " --out " + out.string() + rest, root / "cli.log") != 0) {
        note("pass " + std::to_string(pass + 1) + ": '" + s + "' failed, see " + (root / "cli.log").string());
        ran = false;
      }
    }
    if (pass == 0) fs::rename(out, first);
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(first)) {
    const auto other = out / entry.path().filename();
    ++files;
    if (!fs::exists(other) ||
        strip_timestamp(io::read_file(entry.path())) != strip_timestamp(io::read_file(other))) {
      ++differing;
      note("differs: " + entry.path().filename().string());
    }
  }
  verdict(11, ran && files > 0 && differing == 0,
          std::to_string(files) + " artifacts from " + std::to_string(steps.size()) + " commands, " +
              std::to_string(differing) + " differ");
  if (ran && differing == 0) fs::remove_all(root);
}

}  // namespace

int main() {
  const auto t = Clock::now();
  energy_equivalence();
  solver_agreement();
  chimera_structure();
  clique_embedding();
  sparsity_calibration();
  lambda_peak();
  size_insensitivity();
  pursuit_comparison();
  augmentation();
  thermodynamics();
  determinism();
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << " ("
            << fixed(seconds_since(t), 0) << " s)" << std::endl;
  return failures == 0 ? 0 : 1;
}
