// Command-line front end for the sparse-coding pipeline.

#include "qsc/qsc.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace qsc;

namespace {

constexpr const char* kVersion = "1.0.0";

// Error raised inside a command, tagged with the module that failed.
struct ModuleError : std::runtime_error {
  ModuleError(std::string m, const std::string& what) : std::runtime_error(what), module(std::move(m)) {}
  std::string module;
};

template <class F>
auto in_module(const std::string& module, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ModuleError(module, e.what());
  }
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError("missing input " + p.string());
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// The timestamp is the last line so reruns differ only there.
void write_manifest(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& outputs) {
  std::ostringstream m;
  m << "command=" << command << '\n'
    << "version=" << kVersion << '\n'
    << "config_hash=" << hex64(config_hash(cfg)) << '\n'
    << "seed=" << cfg.seed << '\n'
    << "lambda=" << detail::format_double(cfg.lambda) << '\n'
    << "solver=" << cfg.solver << '\n'
    << "reads=" << cfg.reads << '\n'
    << "workers=" << cfg.workers << '\n'
    << "autoencoder_seed=" << cfg.autoencoder_seed() << '\n'
    << "imprint_seed=" << cfg.imprint_seed() << '\n'
    << "learn_seed=" << cfg.learn_seed() << '\n'
    << "anneal_seed=" << cfg.anneal_seed() << '\n'
    << "classifier_seed=" << cfg.classifier_seed() << '\n';
  for (const auto& o : outputs) m << "output=" << o << '\n';
  m << "[config]\n" << format_config(cfg) << "[end]\n";
  m << "timestamp=" << utc_timestamp() << '\n';
  io::write_file(cfg.out_path("manifest-" + command + ".txt"), m.str());
}

ImageSet reduced_images(const RunConfig& cfg) {
  const auto path = cfg.out_path("reduced.qsc");
  require_file(path);
  return load_images(path);
}

// Unsupervised stages only see the images the classifier trains on.
ImageSet training_part(const ImageSet& set) { return set.head(split_5_1(set.size()).train); }

Dictionary load_dict(const RunConfig& cfg) {
  const auto path = cfg.out_path(cfg.dictionary);
  require_file(path);
  return load_dictionary(path);
}

// Guard rail shared by every command that runs a solver.
void check_solver_fits(const RunConfig& cfg, const Dictionary& dict) {
  if (cfg.solver_kind() == SolverKind::exhaustive && static_cast<std::size_t>(dict.size()) > kExhaustiveCap) {
    throw ConfigError("exhaustive solver is capped at N_q <= " + std::to_string(kExhaustiveCap) +
                      " but the dictionary has " + std::to_string(dict.size()) + " atoms");
  }
}

std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

struct Scores {
  std::size_t train = 0;
  std::size_t test = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Fits the configured head on the first 5/6 of `rows` (or on `train_override`) and
// scores the remaining sixth.
Scores fit_and_score(const RunConfig& cfg, const LabeledFeatures& rows, const LabeledFeatures* train_override = nullptr) {
  const auto split = split_5_1(rows.size());
  const auto train = train_override ? *train_override : slice(rows, 0, split.train);
  const auto test = slice(rows, split.train, rows.size());
  if (test.size() == 0) throw InsufficientDataError("need at least 6 images for a 5:1 split");
  Scores s{train.size(), test.size(), 0.0, 0.0};
  if (cfg.classifier == "svm") {
    SvmConfig sc{cfg.svm_epochs, cfg.svm_lr, cfg.svm_reg, cfg.classifier_seed()};
    const auto fit = train_svm(train, sc);
    s.train_accuracy = accuracy(fit.model, train);
    s.test_accuracy = accuracy(fit.model, test);
  } else {
    MlpConfig mc;
    mc.epochs = cfg.mlp_epochs;
    mc.lr = cfg.mlp_lr;
    mc.seed = cfg.classifier_seed();
    const auto fit = train_mlp(train, mc);
    s.train_accuracy = accuracy(fit.model, train);
    s.test_accuracy = accuracy(fit.model, test);
  }
  return s;
}

std::string format_scores(const RunConfig& cfg, const Scores& s) {
  std::ostringstream out;
  out << "classifier=" << cfg.classifier << '\n'
      << "train_rows=" << s.train << '\n'
      << "test_rows=" << s.test << '\n'
      << "train_accuracy=" << percent(s.train_accuracy) << '\n'
      << "test_accuracy=" << percent(s.test_accuracy) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

std::vector<std::string> cmd_ingest(const RunConfig& cfg) {
  const auto images = cfg.data_path(cfg.images_file);
  const auto labels = cfg.data_path(cfg.labels_file);
  require_file(images);
  require_file(labels);
  const auto reduced = in_module("datasets", [&] {
    const auto raw = load_idx(images, labels);
    return downsample(raw.head(cfg.limit), cfg.workers);
  });
  save_images(cfg.out_path("ingest.qsc"), reduced);
  std::cout << "ingested " << reduced.size() << " images\n";
  return {"ingest.qsc"};
}

std::vector<std::string> cmd_autoencode(const RunConfig& cfg) {
  const auto path = cfg.out_path("ingest.qsc");
  require_file(path);
  const auto set = load_images(path);
  AutoencoderConfig ac;
  ac.epochs = cfg.ae_epochs;
  ac.seed = cfg.autoencoder_seed();
  const auto fit = in_module("datasets", [&] { return train_autoencoder(training_part(set), ac); });
  const auto reduced = standardize(reduce(fit.model, set, cfg.workers), cfg.contrast, cfg.workers);
  io::write_file(cfg.out_path("autoencoder.qsca"), serialize_autoencoder(fit.model));
  save_images(cfg.out_path("reduced.qsc"), reduced);
  std::ostringstream csv;
  csv << std::setprecision(17) << "epoch,validation_mse\n";
  for (std::size_t k = 0; k < fit.validation_mse.size(); ++k) csv << k << ',' << fit.validation_mse[k] << '\n';
  io::write_file(cfg.out_path("autoencoder_mse.csv"), csv.str());
  std::cout << "validation mse " << fit.validation_mse.front() << " -> " << fit.validation_mse.back() << '\n';
  return {"autoencoder.qsca", "reduced.qsc", "autoencoder_mse.csv"};
}

std::vector<std::string> cmd_imprint(const RunConfig& cfg) {
  const auto set = reduced_images(cfg);
  const std::optional<int> patch = cfg.dictionary_mode == "patch" ? std::optional<int>(kPatchSize) : std::nullopt;
  const auto dict = in_module("dictionary", [&] { return imprint(training_part(set), cfg.atoms, patch, cfg.imprint_seed()); });
  save_dictionary(cfg.out_path(cfg.dictionary), dict);
  std::cout << "imprinted " << dict.size() << " atoms of dimension " << dict.dim() << '\n';
  return {cfg.dictionary};
}

std::vector<std::string> cmd_learn(const RunConfig& cfg) {
  const auto set = reduced_images(cfg);
  const auto dict = load_dict(cfg);
  check_solver_fits(cfg, dict);
  LearnConfig lc{cfg.learn_lr, cfg.learn_momentum, cfg.learn_batch, cfg.learn_steps, cfg.learn_seed(), cfg.workers};
  const auto result =
      in_module("dictionary", [&] { return learn(dict, training_part(set), lc, cfg.sparse_solver(), cfg.lambda); });
  const std::string name = fs::path(cfg.dictionary).stem().string() + "_learned.qscd";
  save_dictionary(cfg.out_path(name), result.dictionary);
  std::ostringstream csv;
  csv << std::setprecision(17) << "step,loss\n";
  for (std::size_t k = 0; k < result.loss.size(); ++k) csv << k << ',' << result.loss[k] << '\n';
  io::write_file(cfg.out_path("learn_loss.csv"), csv.str());
  std::cout << "learned " << result.loss.size() << " steps" << (result.converged ? " (converged)" : "") << '\n';
  return {name, "learn_loss.csv"};
}

std::vector<std::string> cmd_encode(const RunConfig& cfg) {
  const auto set = reduced_images(cfg);
  const auto dict = load_dict(cfg);
  check_solver_fits(cfg, dict);
  const auto maps = in_module("pipeline", [&] { return encode_dataset(set, dict, cfg.lambda, cfg.sparse_solver(), cfg.workers); });
  save_feature_maps(cfg.out_path("features.qscf"), maps);
  io::write_file(cfg.out_path("features.csv"), format_feature_csv(maps));
  std::cout << "encoded " << maps.size() << " images, mean sparsity " << percent(mean_sparsity(maps)) << "%\n";
  return {"features.qscf", "features.csv"};
}

std::vector<std::string> cmd_classify(const RunConfig& cfg) {
  const auto path = cfg.out_path("features.qscf");
  require_file(path);
  const auto maps = load_feature_maps(path);
  const auto scores = in_module("pipeline", [&] { return fit_and_score(cfg, to_features(maps)); });
  const std::string name = "classify-" + cfg.classifier + ".txt";
  io::write_file(cfg.out_path(name), format_scores(cfg, scores));
  std::cout << "accuracy " << percent(scores.test_accuracy) << "%\n";
  return {name};
}

std::vector<std::string> cmd_augment(const RunConfig& cfg) {
  const auto set = reduced_images(cfg);
  const auto dict = load_dict(cfg);
  check_solver_fits(cfg, dict);
  if (dict.dim() != set.pixels()) throw ConfigError("augment needs a whole-image dictionary (dictionary_mode=whole)");
  const auto solver = cfg.sparse_solver();
  const auto split = split_5_1(set.size());
  std::vector<std::vector<BinaryState>> codes(set.size());
  in_module("pipeline", [&] {
    parallel_for(set.size(), cfg.workers, [&](std::size_t i) {
      const std::size_t k = i < split.train ? cfg.augment_k : 1;
      codes[i] = augment(encode_image_whole_spectrum(set.images[i], dict, cfg.lambda, solver, k, i), k);
    });
    return 0;
  });
  LabeledFeatures rows, train;
  std::vector<FeatureMap> train_maps;
  for (std::size_t i = 0; i < set.size(); ++i) {
    rows.push(to_vector(codes[i].front()), set.labels[i]);
    if (i >= split.train) continue;
    for (const auto& c : codes[i]) {
      train.push(to_vector(c), set.labels[i]);
      train_maps.push_back({1, 1, static_cast<int>(dict.size()), c, set.labels[i]});
    }
  }
  const auto scores = in_module("pipeline", [&] { return fit_and_score(cfg, rows, &train); });
  save_feature_maps(cfg.out_path("augmented.qscf"), train_maps);
  io::write_file(cfg.out_path("augment.txt"), "k=" + std::to_string(cfg.augment_k) + "\n" + format_scores(cfg, scores));
  std::cout << "k=" << cfg.augment_k << " train rows " << train.size() << ", accuracy "
            << percent(scores.test_accuracy) << "%\n";
  return {"augmented.qscf", "augment.txt"};
}

// The image's single signal: the flattened image for a whole-image dictionary,
// otherwise its first patch.
Vector signal_for(const RunConfig& cfg, const ImageSet& set, const Dictionary& dict) {
  if (cfg.image >= set.size()) throw ConfigError("image index " + std::to_string(cfg.image) + " out of range");
  const Vector& img = set.images[cfg.image];
  if (dict.dim() == img.size()) return img;
  if (dict.dim() == kPatchSize * kPatchSize) return tile(img, set.width, set.height).front().pixels;
  throw ConfigError("dictionary dimension does not match the images");
}

std::vector<std::string> cmd_thermo(const RunConfig& cfg) {
  const auto set = reduced_images(cfg);
  const auto dict = load_dict(cfg);
  check_solver_fits(cfg, dict);
  const Vector x = signal_for(cfg, set, dict);
  const auto grid = lambda_grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_step);
  const auto curve = in_module("thermo", [&] { return lambda_sweep(x, dict, grid, cfg.sparse_solver(), cfg.beta, cfg.workers); });
  const auto d2 = in_module("thermo", [&] { return second_derivative(curve); });
  io::write_file(cfg.out_path("thermo.csv"), format_curve_csv(curve));
  std::ostringstream csv;
  csv << std::setprecision(17) << "lambda,d2F\n";
  for (std::size_t i = 0; i < d2.lambda.size(); ++i) csv << d2.lambda[i] << ',' << d2.value[i] << '\n';
  io::write_file(cfg.out_path("thermo_d2.csv"), csv.str());
  std::cout << "|d2F| peak at lambda " << d2.peak_lambda(curve) << ", recon minimum at lambda "
            << curve.points[curve.recon_argmin()].lambda << '\n';
  return {"thermo.csv", "thermo_d2.csv"};
}

std::vector<std::string> cmd_embed(const RunConfig& cfg) {
  QuboProblem logical;
  if (!cfg.qubo.empty()) {
    require_file(cfg.qubo);
    logical = in_module("qubo", [&] { return parse_qubo(io::read_file(cfg.qubo)); });
  } else {
    const auto set = reduced_images(cfg);
    const auto dict = load_dict(cfg);
    const Vector x = signal_for(cfg, set, dict);
    logical = in_module("qubo", [&] { return to_qubo(dict, x, cfg.lambda); });
  }
  const auto graph = chimera_graph(12, 12, 4);
  const double strength = cfg.chain_strength > 0.0 ? cfg.chain_strength : default_chain_strength(logical);
  const auto embedding = in_module("chimera", [&] { return embed_clique(logical.size(), graph, strength); });
  const auto report = validate_embedding(embedding, graph);
  if (!report.valid()) throw ModuleError("chimera", "embedding failed validation");
  const auto physical = embed_qubo(logical, embedding, graph);
  // Chains only flip as a unit when the start temperature reaches the chain penalty.
  auto anneal = cfg.anneal_config();
  anneal.t_hot = std::max(anneal.t_hot, strength);
  anneal.workers = cfg.workers;
  const auto spectrum = in_module("solvers", [&] { return unembed(solve_annealed(physical, anneal, 0), embedding, logical); });
  io::write_file(cfg.out_path("logical_qubo.txt"), format_qubo(logical));
  io::write_file(cfg.out_path("embedding.txt"), format_embedding(embedding));
  io::write_file(cfg.out_path("physical_qubo.txt"), format_qubo(physical));
  io::write_file(cfg.out_path("spectrum.csv"), format_spectrum_csv(spectrum));
  std::cout << "embedded " << logical.size() << " variables on " << embedding.physical_qubits().size()
            << " qubits, chain strength " << strength << "; ground energy " << spectrum.ground().energy << '\n';
  return {"logical_qubo.txt", "embedding.txt", "physical_qubo.txt", "spectrum.csv"};
}

std::vector<std::string> cmd_sweep(const RunConfig& cfg) {
  const auto set = reduced_images(cfg);
  const auto dict = load_dict(cfg);
  check_solver_fits(cfg, dict);
  std::ostringstream csv;
  csv << "lambda,sparsity,train_accuracy,test_accuracy\n";
  for (double lambda : cfg.lambda_list()) {
    const auto maps = in_module("pipeline", [&] { return encode_dataset(set, dict, lambda, cfg.sparse_solver(), cfg.workers); });
    const auto scores = in_module("pipeline", [&] { return fit_and_score(cfg, to_features(maps)); });
    csv << detail::format_double(lambda) << ',' << percent(mean_sparsity(maps)) << ',' << percent(scores.train_accuracy)
        << ',' << percent(scores.test_accuracy) << '\n';
    std::cout << "lambda " << lambda << " sparsity " << percent(mean_sparsity(maps)) << "% accuracy "
              << percent(scores.test_accuracy) << "%\n";
  }
  io::write_file(cfg.out_path("sweep.csv"), csv.str());
  return {"sweep.csv"};
}

using Command = std::vector<std::string> (*)(const RunConfig&);

const std::map<std::string, std::pair<Command, std::string>>& commands() {
  static const std::map<std::string, std::pair<Command, std::string>> table = {
      {"ingest", {cmd_ingest, "read IDX files, cap to `limit`, downsample to 12x12"}},
      {"autoencode", {cmd_autoencode, "train the bottleneck autoencoder and write the reduced set"}},
      {"imprint", {cmd_imprint, "build a dictionary from random images or patches"}},
      {"learn", {cmd_learn, "refine the dictionary by sparse-coding SGD"}},
      {"encode", {cmd_encode, "sparse-code every image into feature maps"}},
      {"classify", {cmd_classify, "train the classifier head on encoded features"}},
      {"augment", {cmd_augment, "train on the k lowest-energy codes per image"}},
      {"thermo", {cmd_thermo, "lambda sweep and free-energy curve for one image"}},
      {"embed", {cmd_embed, "clique-embed one QUBO on a 12x12x8 Chimera graph and anneal it"}},
      {"sweep", {cmd_sweep, "sparsity and accuracy over a list of lambdas"}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binary sparse coding with QUBO solvers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_file;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands()) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->add_option("--config", config_file, "flat key=value config file");
    for (const auto& f : config_fields()) sub->add_option("--" + f.name, flags[f.name]);
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  RunConfig cfg;
  std::vector<std::string> outputs;
  try {
    if (!config_file.empty()) {
      require_file(config_file);
      apply_config_text(cfg, io::read_file(config_file));
    }
    for (const auto& f : config_fields()) {
      if (subs[command]->count("--" + f.name) > 0) set_config_value(cfg, f.name, flags[f.name]);
    }
    cfg.validate();
    outputs = commands().at(command).first(cfg);
    write_manifest(cfg, command, outputs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const ModuleError& e) {
    std::cerr << "error [" << e.module << "]: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error [io]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
