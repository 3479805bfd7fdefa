#pragma once

#include "qsc/common.hpp"
#include "qsc/datasets.hpp"
#include "qsc/dictionary.hpp"
#include "qsc/pipeline.hpp"
#include "qsc/solvers.hpp"
#include "qsc/thermo.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace qsc {

/// Everything a CLI run depends on. Stage seeds are derived from `seed`.
struct RunConfig {
  std::string data_dir = "data/mnist";
  std::string images_file = "mnist10k-images-idx3-ubyte.gz";
  std::string labels_file = "mnist10k-labels-idx1-ubyte.gz";
  std::string out = "run";
  std::string dictionary = "dictionary.qscd";
  std::size_t limit = 2000;

  double lambda = 0.7;
  std::string solver = "anneal";
  std::size_t reads = 8;
  std::size_t sweeps = 50;
  double t_hot = 2.0;
  double t_cold = 0.05;
  unsigned workers = 1;
  std::uint64_t seed = 2018;

  double contrast = kDefaultContrast;
  int ae_epochs = 30;

  std::string dictionary_mode = "patch";
  std::size_t atoms = 47;
  std::size_t learn_steps = 100;
  double learn_lr = 0.01;
  double learn_momentum = 0.5;
  std::size_t learn_batch = 256;

  std::string classifier = "svm";
  int svm_epochs = 30;
  double svm_lr = 0.1;
  double svm_reg = 1e-4;
  int mlp_epochs = 30;
  double mlp_lr = 0.05;

  std::size_t augment_k = 30;
  std::string lambdas = "0.5,0.7,1.0,1.5";

  std::size_t image = 0;
  double lambda_min = 0.5;
  double lambda_max = 3.5;
  double lambda_step = 0.1;
  double beta = kDefaultBeta;

  std::string qubo;
  double chain_strength = 0.0;  // 0 selects default_chain_strength

  SolverKind solver_kind() const { return parse_solver_kind(solver); }

  SparseSolver sparse_solver() const {
    SparseSolver s;
    s.kind = solver_kind();
    s.anneal = anneal_config();
    return s;
  }

  AnnealConfig anneal_config() const {
    AnnealConfig a;
    a.reads = reads;
    a.sweeps = sweeps;
    a.t_hot = t_hot;
    a.t_cold = t_cold;
    a.seed = anneal_seed();
    a.workers = 1;
    return a;
  }

  std::uint64_t autoencoder_seed() const { return derive_seed(seed, 1); }
  std::uint64_t imprint_seed() const { return derive_seed(seed, 2); }
  std::uint64_t learn_seed() const { return derive_seed(seed, 3); }
  std::uint64_t anneal_seed() const { return derive_seed(seed, 4); }
  std::uint64_t classifier_seed() const { return derive_seed(seed, 5); }

  std::vector<double> lambda_list() const {
    std::vector<double> out_list;
    std::stringstream in(lambdas);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        std::size_t used = 0;
        out_list.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("lambdas: bad value '" + item + "'");
      }
    }
    if (out_list.empty()) throw ConfigError("lambdas: empty list");
    return out_list;
  }

  std::filesystem::path data_path(const std::string& file) const { return std::filesystem::path(data_dir) / file; }
  std::filesystem::path out_path(const std::string& file) const { return std::filesystem::path(out) / file; }

  void validate() const;
};

namespace detail {

struct ConfigField {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": bad value '" + text + "'");
  return value;
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
ConfigField field(const std::string& name, T RunConfig::*member) {
  ConfigField f{name, {}, {}};
  if constexpr (std::is_same_v<T, std::string>) {
    f.get = [member](const RunConfig& c) { return c.*member; };
    f.set = [member](RunConfig& c, const std::string& v) { c.*member = v; };
  } else if constexpr (std::is_same_v<T, double>) {
    f.get = [member](const RunConfig& c) { return format_double(c.*member); };
    f.set = [member, name](RunConfig& c, const std::string& v) { c.*member = parse_number<double>(name, v); };
  } else {
    f.get = [member](const RunConfig& c) { return std::to_string(c.*member); };
    f.set = [member, name](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(name, v); };
  }
  return f;
}

}  // namespace detail

/// Keys accepted in config files and as --key flags, in canonical order.
inline const std::vector<detail::ConfigField>& config_fields() {
  using detail::field;
  static const std::vector<detail::ConfigField> fields = {
      field("data_dir", &RunConfig::data_dir),
      field("images_file", &RunConfig::images_file),
      field("labels_file", &RunConfig::labels_file),
      field("out", &RunConfig::out),
      field("dictionary", &RunConfig::dictionary),
      field("limit", &RunConfig::limit),
      field("lambda", &RunConfig::lambda),
      field("solver", &RunConfig::solver),
      field("reads", &RunConfig::reads),
      field("sweeps", &RunConfig::sweeps),
      field("t_hot", &RunConfig::t_hot),
      field("t_cold", &RunConfig::t_cold),
      field("workers", &RunConfig::workers),
      field("seed", &RunConfig::seed),
      field("contrast", &RunConfig::contrast),
      field("ae_epochs", &RunConfig::ae_epochs),
      field("dictionary_mode", &RunConfig::dictionary_mode),
      field("atoms", &RunConfig::atoms),
      field("learn_steps", &RunConfig::learn_steps),
      field("learn_lr", &RunConfig::learn_lr),
      field("learn_momentum", &RunConfig::learn_momentum),
      field("learn_batch", &RunConfig::learn_batch),
      field("classifier", &RunConfig::classifier),
      field("svm_epochs", &RunConfig::svm_epochs),
      field("svm_lr", &RunConfig::svm_lr),
      field("svm_reg", &RunConfig::svm_reg),
      field("mlp_epochs", &RunConfig::mlp_epochs),
      field("mlp_lr", &RunConfig::mlp_lr),
      field("augment_k", &RunConfig::augment_k),
      field("lambdas", &RunConfig::lambdas),
      field("image", &RunConfig::image),
      field("lambda_min", &RunConfig::lambda_min),
      field("lambda_max", &RunConfig::lambda_max),
      field("lambda_step", &RunConfig::lambda_step),
      field("beta", &RunConfig::beta),
      field("qubo", &RunConfig::qubo),
      field("chain_strength", &RunConfig::chain_strength),
  };
  return fields;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields()) {
    if (f.name == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Flat key=value text; '#' starts a comment, blank lines are ignored.
inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key=value");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

/// Canonical key=value dump; parsing it back gives an identical config.
inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_fields()) out += f.name + "=" + f.get(cfg) + "\n";
  return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(format_config(cfg)); }

inline void RunConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  try {
    (void)solver_kind();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (solver_kind() == SolverKind::anneal) {
    try {
      anneal_config().validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (limit == 0) throw ConfigError("limit must be >= 1");
  if (!(contrast > 0.0)) throw ConfigError("contrast must be > 0");
  if (ae_epochs < 1) throw ConfigError("ae_epochs must be >= 1");
  if (dictionary_mode != "patch" && dictionary_mode != "whole")
    throw ConfigError("dictionary_mode must be 'patch' or 'whole'");
  if (atoms == 0) throw ConfigError("atoms must be >= 1");
  if (classifier != "svm" && classifier != "mlp") throw ConfigError("classifier must be 'svm' or 'mlp'");
  if (svm_epochs < 1 || mlp_epochs < 1) throw ConfigError("classifier epochs must be >= 1");
  if (augment_k == 0) throw ConfigError("augment_k must be >= 1");
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(chain_strength >= 0.0)) throw ConfigError("chain_strength must be >= 0");
  if (!(lambda_step > 0.0) || !(lambda_max > lambda_min)) throw ConfigError("lambda grid must be ascending");
  for (double l : lambda_list())
    if (!(l >= 0.0)) throw ConfigError("lambdas must be >= 0");
  LearnConfig lc{learn_lr, learn_momentum, learn_batch, learn_steps, learn_seed(), workers};
  try {
    lc.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace qsc
