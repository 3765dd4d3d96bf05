#include "gsapool/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gsapool {

namespace {

constexpr const char* kCommands[] = {"train", "ablate", "stats",
                                     "export-embeddings", "gradcheck"};

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("invalid value for " + key + ": '" + value + "'");
  }
}

long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("invalid value for " + key + ": '" + value + "'");
  }
}

// One entry per knob; config-file keys and flags share these names.
struct Knob {
  const char* key;
  const char* help;
  void (*apply)(RunSpec&, const std::string&);
};

const Knob kKnobs[] = {
    {"dataset", "dataset name: DD, NCI1, NCI109, Mutagenicity or synthetic",
     [](RunSpec& s, const std::string& v) { s.dataset = v; }},
    {"data-dir", "directory holding TU-format dataset folders",
     [](RunSpec& s, const std::string& v) { s.data_dir = v; }},
    {"out-dir", "directory for metrics, checkpoints and exports",
     [](RunSpec& s, const std::string& v) { s.out_dir = v; }},
    {"ratio", "pooling ratio in (0, 1]",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.ratio = to_double("ratio", v);
     }},
    {"alpha", "structure-score weight in [0, 1]",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.alpha = to_double("alpha", v);
       s.alpha_overridden = true;
     }},
    {"sbtl", "structure scorer kernel: gcn, cheb, sage or gat",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.sbtl_kernel = score_kernel_from_string(v);
     }},
    {"fusion", "feature fusion: none, gcn or gat",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.fusion = fusion_from_string(v);
     }},
    {"fusion-hops", "number of fusion passes before discarding nodes",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.fusion_hops = static_cast<int>(to_long("fusion-hops", v));
     }},
    {"score-activation", "score activation: tanh or sigmoid",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.score_activation = activation_from_string(v);
     }},
    {"cheb-order", "Chebyshev kernel order",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.cheb_order = static_cast<int>(to_long("cheb-order", v));
     }},
    {"gat-heads", "attention heads in gat kernels",
     [](RunSpec& s, const std::string& v) {
       s.model.pool.gat_heads = static_cast<int>(to_long("gat-heads", v));
     }},
    {"hidden-dim", "width of the backbone convolutions",
     [](RunSpec& s, const std::string& v) {
       s.model.hidden_dim = static_cast<int>(to_long("hidden-dim", v));
     }},
    {"num-blocks", "number of convolution+pooling blocks",
     [](RunSpec& s, const std::string& v) {
       s.model.num_blocks = static_cast<int>(to_long("num-blocks", v));
     }},
    {"dropout", "classifier dropout rate in [0, 1)",
     [](RunSpec& s, const std::string& v) {
       s.model.dropout_rate = to_double("dropout", v);
     }},
    {"folds", "cross-validation folds",
     [](RunSpec& s, const std::string& v) {
       s.train.folds = static_cast<int>(to_long("folds", v));
     }},
    {"epochs", "maximum training epochs",
     [](RunSpec& s, const std::string& v) {
       s.train.epochs = static_cast<int>(to_long("epochs", v));
     }},
    {"batch-size", "graphs per optimizer step",
     [](RunSpec& s, const std::string& v) {
       s.train.batch_size = static_cast<int>(to_long("batch-size", v));
     }},
    {"lr", "Adam learning rate",
     [](RunSpec& s, const std::string& v) {
       s.train.lr = to_double("lr", v);
     }},
    {"weight-decay", "L2 penalty added to gradients",
     [](RunSpec& s, const std::string& v) {
       s.train.weight_decay = to_double("weight-decay", v);
     }},
    {"patience", "early-stopping patience in epochs",
     [](RunSpec& s, const std::string& v) {
       s.train.patience = static_cast<int>(to_long("patience", v));
     }},
    {"seed", "base random seed",
     [](RunSpec& s, const std::string& v) {
       s.train.seed = static_cast<std::uint64_t>(to_long("seed", v));
     }},
    {"jobs", "concurrent folds",
     [](RunSpec& s, const std::string& v) {
       s.jobs = static_cast<int>(to_long("jobs", v));
     }},
    {"axis", "ablation axis: ratio, alpha, kernel or fusion",
     [](RunSpec& s, const std::string& v) { s.axis = v; }},
    {"synthetic-size", "graphs in the generated synthetic dataset",
     [](RunSpec& s, const std::string& v) {
       s.synthetic_size = static_cast<int>(to_long("synthetic-size", v));
     }},
};

const Knob* find_knob(const std::string& key) {
  for (const Knob& k : kKnobs)
    if (key == k.key) return &k;
  return nullptr;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ": line " + std::to_string(lineno) +
                       ": expected key=value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (!find_knob(key))
      throw UsageError(path + ": unknown config key '" + key + "'");
    entries[key] = value;
  }
  return entries;
}

std::string usage_text() {
  std::ostringstream os;
  os << "usage: gsapool <command> [flags]\n\ncommands:\n"
     << "  train              cross-validated training, writes metrics.json\n"
     << "  ablate             sweep one axis (--axis), one metrics file per cell\n"
     << "  stats              print dataset statistics\n"
     << "  export-embeddings  train once and write graph embeddings as CSV\n"
     << "  gradcheck          run the finite-difference gradient suite\n"
     << "\nflags (also config-file keys, 'key=value' lines, flags win):\n";
  for (const Knob& k : kKnobs)
    os << "  --" << k.key << ": " << k.help << "\n";
  os << "  --config <file>: load key=value defaults\n";
  return os.str();
}

}  // namespace

std::string canonical_dataset_name(const std::string& name) {
  std::string lower;
  for (char c : name)
    if (c != '-' && c != '_')
      lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "dd") return "DD";
  if (lower == "nci1") return "NCI1";
  if (lower == "nci109") return "NCI109";
  if (lower == "mutagenicity") return "Mutagenicity";
  if (lower == "synthetic") return "synthetic";
  throw UsageError("unknown dataset '" + name +
                   "' (expected DD, NCI1, NCI109, Mutagenicity or synthetic)");
}

RunSpec parse_run_spec(const std::vector<std::string>& args) {
  if (args.empty()) throw UsageError(usage_text());
  const std::string command = args[0];
  if (command == "-h" || command == "--help" || command == "help")
    throw UsageError(usage_text(), 0);
  if (std::find(std::begin(kCommands), std::end(kCommands), command) ==
      std::end(kCommands))
    throw UsageError("unknown command '" + command + "'\n\n" + usage_text());

  CLI::App app{"graph classification with self-adaptive pooling"};
  std::map<std::string, std::string> cli_values;
  for (const Knob& k : kKnobs) {
    const std::string key = k.key;
    app.add_option_function<std::string>(
        "--" + key,
        [&cli_values, key](const std::string& v) { cli_values[key] = v; },
        k.help);
  }
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file");

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 wants reversed args
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(usage_text(), 0);
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n\n" + usage_text());
  }

  RunSpec spec;
  spec.command = command;
  if (!config_path.empty())
    for (const auto& [key, value] : read_config_file(config_path))
      if (!cli_values.count(key)) find_knob(key)->apply(spec, value);
  for (const auto& [key, value] : cli_values) find_knob(key)->apply(spec, value);

  spec.dataset = canonical_dataset_name(spec.dataset);
  if (!spec.alpha_overridden)
    spec.model.pool.alpha = spec.dataset == "DD" ? 0.6 : 0.4;

  if (spec.command == "ablate") {
    static const char* axes[] = {"ratio", "alpha", "kernel", "fusion"};
    if (std::find_if(std::begin(axes), std::end(axes), [&](const char* a) {
          return spec.axis == a;
        }) == std::end(axes))
      throw UsageError(
          "ablate needs --axis ratio|alpha|kernel|fusion (got '" + spec.axis +
          "')");
  }
  if (spec.jobs < 1) throw UsageError("--jobs must be >= 1");
  spec.model.validate();
  if (spec.command == "train" || spec.command == "ablate" ||
      spec.command == "export-embeddings")
    spec.train.validate();
  return spec;
}

Dataset load_dataset_for(const RunSpec& spec) {
  if (spec.dataset == "synthetic")
    return synthetic_motif_dataset(spec.synthetic_size, spec.train.seed);
  const fs::path base(spec.data_dir);
  for (const auto& dir : {base / spec.dataset, base}) {
    if (fs::exists(dir / (spec.dataset + "_A.txt")))
      return load_tu_dataset(dir.string(), spec.dataset);
  }
  throw std::runtime_error("dataset " + spec.dataset + " not found under '" +
                           spec.data_dir + "' (expected " + spec.dataset +
                           "_A.txt)");
}

namespace {

json config_echo(const RunSpec& spec) {
  json cfg;
  cfg["dataset"] = spec.dataset;
  cfg["data-dir"] = spec.data_dir;
  cfg["out-dir"] = spec.out_dir;
  cfg["ratio"] = spec.model.pool.ratio;
  cfg["alpha"] = spec.model.pool.alpha;
  cfg["sbtl"] = to_string(spec.model.pool.sbtl_kernel);
  cfg["fusion"] = to_string(spec.model.pool.fusion);
  cfg["fusion-hops"] = spec.model.pool.fusion_hops;
  cfg["score-activation"] = to_string(spec.model.pool.score_activation);
  cfg["cheb-order"] = spec.model.pool.cheb_order;
  cfg["gat-heads"] = spec.model.pool.gat_heads;
  cfg["hidden-dim"] = spec.model.hidden_dim;
  cfg["num-blocks"] = spec.model.num_blocks;
  cfg["dropout"] = spec.model.dropout_rate;
  cfg["folds"] = spec.train.folds;
  cfg["epochs"] = spec.train.epochs;
  cfg["batch-size"] = spec.train.batch_size;
  cfg["lr"] = spec.train.lr;
  cfg["weight-decay"] = spec.train.weight_decay;
  cfg["patience"] = spec.train.patience;
  cfg["seed"] = spec.train.seed;
  cfg["jobs"] = spec.jobs;
  cfg["synthetic-size"] = spec.synthetic_size;
  return cfg;
}

json metrics_to_json(const RunSpec& spec, const Metrics& m,
                     double elapsed_seconds) {
  json j;
  j["command"] = spec.command;
  j["dataset"] = spec.dataset;
  j["config"] = config_echo(spec);
  j["per_fold_accuracy"] = m.fold_accuracy;
  j["mean_accuracy"] = m.mean;
  j["std_accuracy"] = m.stddev;
  json folds = json::array();
  for (std::size_t f = 0; f < m.curves.size(); ++f) {
    json fold;
    fold["fold"] = f;
    fold["test_accuracy"] = m.fold_accuracy[f];
    fold["best_epoch"] = m.curves[f].best_epoch;
    fold["train_loss"] = m.curves[f].train_loss;
    fold["valid_loss"] = m.curves[f].valid_loss;
    folds.push_back(std::move(fold));
  }
  j["folds"] = std::move(folds);
  j["elapsed_seconds"] = elapsed_seconds;
  return j;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

Metrics run_cross_validation(const RunSpec& spec, const Dataset& d,
                             const fs::path& out_file) {
  const auto start = std::chrono::steady_clock::now();
  Metrics m = cross_validate(d, spec.model, spec.train, spec.jobs);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_json(metrics_to_json(spec, m, elapsed), out_file);
  std::cout << spec.dataset << ": accuracy " << m.mean * 100.0 << " +/- "
            << m.stddev * 100.0 << " over " << spec.train.folds << " folds ("
            << out_file.string() << ")\n";
  return m;
}

int cmd_train(const RunSpec& spec) {
  Dataset d = load_dataset_for(spec);
  fs::create_directories(spec.out_dir);
  run_cross_validation(spec, d, fs::path(spec.out_dir) / "metrics.json");
  return 0;
}

std::string cell_tag(double v) {
  std::ostringstream os;
  os << v;
  std::string tag = os.str();
  std::replace(tag.begin(), tag.end(), '.', 'p');
  return tag;
}

int cmd_ablate(const RunSpec& spec) {
  Dataset d = load_dataset_for(spec);
  fs::create_directories(spec.out_dir);
  const fs::path out(spec.out_dir);

  std::vector<std::pair<std::string, RunSpec>> cells;
  if (spec.axis == "ratio") {
    for (double r : {0.25, 0.5, 0.75}) {
      RunSpec cell = spec;
      cell.model.pool.ratio = r;
      cells.emplace_back("ratio_" + cell_tag(r), std::move(cell));
    }
  } else if (spec.axis == "alpha") {
    for (double a : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      RunSpec cell = spec;
      cell.model.pool.alpha = a;
      cells.emplace_back("alpha_" + cell_tag(a), std::move(cell));
    }
  } else if (spec.axis == "kernel") {
    // single-kernel scorers run pure (alpha 1, or 0 for the feature MLP);
    // the combined cell keeps the configured alpha. Fusion stays off so the
    // comparison isolates the scorer.
    const std::pair<ScoreKernel, const char*> pure[] = {
        {ScoreKernel::sage, "sage"},
        {ScoreKernel::gat, "gat"},
        {ScoreKernel::gcn, "gcn"},
        {ScoreKernel::cheb, "cheb"}};
    for (const auto& [kernel, name] : pure) {
      RunSpec cell = spec;
      cell.model.pool.sbtl_kernel = kernel;
      cell.model.pool.alpha = 1.0;
      cell.model.pool.fusion = FusionKind::none;
      cells.emplace_back(std::string("kernel_") + name, std::move(cell));
    }
    RunSpec mlp_cell = spec;
    mlp_cell.model.pool.alpha = 0.0;
    mlp_cell.model.pool.fusion = FusionKind::none;
    cells.emplace_back("kernel_mlp", std::move(mlp_cell));
    RunSpec combined = spec;
    combined.model.pool.sbtl_kernel = ScoreKernel::gcn;
    combined.model.pool.fusion = FusionKind::none;
    cells.emplace_back("kernel_gcn_mlp", std::move(combined));
  } else {  // fusion
    for (FusionKind f :
         {FusionKind::none, FusionKind::gcn, FusionKind::gat}) {
      RunSpec cell = spec;
      cell.model.pool.fusion = f;
      cells.emplace_back("fusion_" + to_string(f), std::move(cell));
    }
  }

  for (auto& [tag, cell] : cells) {
    std::cout << "[ablate " << spec.axis << "] " << tag << "\n";
    run_cross_validation(cell, d, out / ("ablate_" + tag + ".json"));
  }
  return 0;
}

int cmd_stats(const RunSpec& spec) {
  Dataset d = load_dataset_for(spec);
  DatasetStats s = dataset_stats(d);
  std::cout << d.name << ": " << s.num_graphs << " graphs, " << s.num_classes
            << " classes, " << std::fixed << std::setprecision(2)
            << s.mean_nodes << " mean nodes, " << s.mean_edges
            << " mean edges\n";
  return 0;
}

int cmd_export_embeddings(const RunSpec& spec) {
  Dataset d = load_dataset_for(spec);
  fs::create_directories(spec.out_dir);

  FoldPlan plan = stratified_folds(d, spec.train.folds, spec.train.seed);
  std::vector<const Graph*> train, valid;
  for (std::size_t i = 0; i < d.graphs.size(); ++i)
    (plan.assignments[i] == 0 ? valid : train).push_back(&d.graphs[i]);
  FoldOutcome out = train_fold(train, valid, spec.model, spec.train,
                               d.feature_dim, d.num_classes, spec.train.seed);

  const fs::path base(spec.out_dir);
  out.model.params().save_checkpoint((base / "model.ckpt").string());
  write_embeddings_csv((base / "embeddings.csv").string(), d, out.model);
  std::cout << "wrote " << (base / "embeddings.csv").string() << " and "
            << (base / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_gradcheck() {
  const bool ok = run_gradient_suite(std::cout);
  std::cout << (ok ? "gradient suite: all checks passed\n"
                   : "gradient suite: FAILURES\n");
  return ok ? 0 : 1;
}

}  // namespace

int run(const RunSpec& spec) {
  if (spec.command == "train") return cmd_train(spec);
  if (spec.command == "ablate") return cmd_ablate(spec);
  if (spec.command == "stats") return cmd_stats(spec);
  if (spec.command == "export-embeddings") return cmd_export_embeddings(spec);
  if (spec.command == "gradcheck") return cmd_gradcheck();
  throw UsageError("unknown command '" + spec.command + "'");
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(parse_run_spec(args));
  } catch (const UsageError& e) {
    (e.exit_code == 0 ? std::cout : std::cerr) << e.what() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gsapool
