#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gsapool/cli.hpp"

using namespace gsapool;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gsapool_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

json load_json(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is);
  json j;
  is >> j;
  return j;
}

std::vector<std::string> fast_synthetic_args(const TempDir& out,
                                             int epochs = 2) {
  return {"train",
          "--dataset", "synthetic",
          "--synthetic-size", "24",
          "--hidden-dim", "4",
          "--num-blocks", "1",
          "--folds", "2",
          "--epochs", std::to_string(epochs),
          "--batch-size", "8",
          "--out-dir", (out.path / "run").string()};
}

}  // namespace

TEST_CASE("defaults reproduce the headline configuration") {
  RunSpec spec = parse_run_spec({"train"});
  CHECK(spec.model.pool.ratio == 0.5);
  CHECK(spec.model.pool.alpha == 0.4);  // synthetic is not DD
  CHECK(to_string(spec.model.pool.sbtl_kernel) == "gcn");
  CHECK(to_string(spec.model.pool.fusion) == "gat");
  CHECK(spec.model.hidden_dim == 128);
  CHECK(spec.model.num_blocks == 3);
  CHECK(spec.train.folds == 10);
  CHECK(spec.train.lr == 5e-4);

  RunSpec dd = parse_run_spec({"stats", "--dataset", "DD"});
  CHECK(dd.model.pool.alpha == 0.6);  // DD default differs
}

TEST_CASE("dataset names are canonicalized") {
  CHECK(canonical_dataset_name("NCI-1") == "NCI1");
  CHECK(canonical_dataset_name("nci109") == "NCI109");
  CHECK(canonical_dataset_name("dd") == "DD");
  CHECK(canonical_dataset_name("MUTAGENICITY") == "Mutagenicity");
  CHECK_THROWS_AS(canonical_dataset_name("cora"), UsageError);
}

TEST_CASE("unknown commands and flags produce usage errors") {
  CHECK_THROWS_AS(parse_run_spec({"frobnicate"}), UsageError);
  CHECK_THROWS_AS(parse_run_spec({"train", "--no-such-flag", "1"}),
                  UsageError);
  CHECK_THROWS_AS(parse_run_spec({"train", "--ratio", "potato"}), UsageError);
  CHECK_THROWS_AS(parse_run_spec({"ablate", "--axis", "bogus"}), UsageError);
  CHECK_THROWS_AS(parse_run_spec({}), UsageError);
}

TEST_CASE("flags beat config files which beat defaults") {
  TempDir tmp;
  const fs::path cfg = tmp.path / "run.cfg";
  {
    std::ofstream os(cfg);
    os << "# comment line\n";
    os << "ratio = 0.25\n";
    os << "epochs=7\n";
    os << "sbtl = cheb\n";
  }
  RunSpec spec = parse_run_spec({"train", "--config", cfg.string(),
                                 "--ratio", "0.75"});
  CHECK(spec.model.pool.ratio == 0.75);                    // flag wins
  CHECK(spec.train.epochs == 7);                           // config wins
  CHECK(to_string(spec.model.pool.sbtl_kernel) == "cheb"); // config wins
  CHECK(spec.train.batch_size == 32);                      // default stands

  {
    std::ofstream os(cfg);
    os << "no-such-key = 1\n";
  }
  CHECK_THROWS_AS(parse_run_spec({"train", "--config", cfg.string()}),
                  UsageError);
}

TEST_CASE("train writes a metrics file with a faithful config echo") {
  TempDir tmp;
  RunSpec spec = parse_run_spec(fast_synthetic_args(tmp));
  CHECK(run(spec) == 0);

  json j = load_json(tmp.path / "run" / "metrics.json");
  CHECK(j["command"] == "train");
  CHECK(j["dataset"] == "synthetic");
  CHECK(j["per_fold_accuracy"].size() == 2);
  CHECK(j["folds"].size() == 2);
  CHECK(j["folds"][0].contains("train_loss"));
  CHECK(j["folds"][0].contains("valid_loss"));
  CHECK(j.contains("mean_accuracy"));
  CHECK(j.contains("std_accuracy"));
  CHECK(j["config"]["hidden-dim"] == 4);
  CHECK(j["config"]["seed"] == 1);

  // the echo is sufficient to re-run: feed it back as a config file
  const fs::path cfg = tmp.path / "echo.cfg";
  {
    std::ofstream os(cfg);
    for (const auto& [key, value] : j["config"].items()) {
      if (value.is_string())
        os << key << "=" << value.get<std::string>() << "\n";
      else
        os << key << "=" << value.dump() << "\n";
    }
  }
  RunSpec again = parse_run_spec(
      {"train", "--config", cfg.string(), "--out-dir",
       (tmp.path / "run2").string()});
  CHECK(run(again) == 0);
  json j2 = load_json(tmp.path / "run2" / "metrics.json");
  CHECK(j2["per_fold_accuracy"] == j["per_fold_accuracy"]);
  CHECK(j2["folds"] == j["folds"]);
}

TEST_CASE("identical run specs give byte-identical metrics modulo timing") {
  TempDir tmp;
  RunSpec spec = parse_run_spec(fast_synthetic_args(tmp));
  CHECK(run(spec) == 0);
  json first = load_json(tmp.path / "run" / "metrics.json");
  CHECK(run(spec) == 0);
  json second = load_json(tmp.path / "run" / "metrics.json");
  first.erase("elapsed_seconds");
  second.erase("elapsed_seconds");
  CHECK(first.dump() == second.dump());
}

TEST_CASE("stats prints the dataset summary") {
  TempDir tmp;
  RunSpec spec = parse_run_spec({"stats", "--dataset", "synthetic",
                                 "--synthetic-size", "40"});
  CHECK(run(spec) == 0);
  Dataset d = load_dataset_for(spec);
  CHECK(d.graphs.size() == 40);
}

TEST_CASE("missing TU datasets fail with a pointer to the expected file") {
  TempDir tmp;
  RunSpec spec = parse_run_spec(
      {"stats", "--dataset", "DD", "--data-dir", tmp.path.string()});
  try {
    load_dataset_for(spec);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("DD_A.txt") != std::string::npos);
  }
}

TEST_CASE("the alpha ablation writes one metrics file per cell") {
  TempDir tmp;
  std::vector<std::string> args = {"ablate", "--axis", "alpha",
                                   "--dataset", "synthetic",
                                   "--synthetic-size", "24",
                                   "--hidden-dim", "4",
                                   "--num-blocks", "1",
                                   "--folds", "2",
                                   "--epochs", "1",
                                   "--batch-size", "8",
                                   "--out-dir", tmp.path.string()};
  CHECK(run(parse_run_spec(args)) == 0);
  const char* cells[] = {"alpha_0", "alpha_0p2", "alpha_0p4",
                         "alpha_0p6", "alpha_0p8", "alpha_1"};
  for (const char* cell : cells) {
    const fs::path file = tmp.path / ("ablate_" + std::string(cell) + ".json");
    INFO(file.string());
    CHECK(fs::exists(file));
    json j = load_json(file);
    CHECK(j["per_fold_accuracy"].size() == 2);
  }
}

TEST_CASE("the kernel ablation covers the scorer table") {
  TempDir tmp;
  std::vector<std::string> args = {"ablate", "--axis", "kernel",
                                   "--dataset", "synthetic",
                                   "--synthetic-size", "24",
                                   "--hidden-dim", "4",
                                   "--num-blocks", "1",
                                   "--folds", "2",
                                   "--epochs", "1",
                                   "--batch-size", "8",
                                   "--out-dir", tmp.path.string()};
  CHECK(run(parse_run_spec(args)) == 0);
  for (const char* cell : {"kernel_sage", "kernel_gat", "kernel_gcn",
                           "kernel_cheb", "kernel_mlp", "kernel_gcn_mlp"}) {
    CHECK(fs::exists(tmp.path / ("ablate_" + std::string(cell) + ".json")));
  }
  // pure-kernel cells pin alpha at the endpoints and disable fusion
  json gcn = load_json(tmp.path / "ablate_kernel_gcn.json");
  CHECK(gcn["config"]["alpha"] == 1.0);
  CHECK(gcn["config"]["fusion"] == "none");
  json mlp = load_json(tmp.path / "ablate_kernel_mlp.json");
  CHECK(mlp["config"]["alpha"] == 0.0);
}

TEST_CASE("TU datasets load through the CLI data-dir resolution") {
  TempDir tmp;
  // a miniature TU-format tree: <data-dir>/NCI1/NCI1_*.txt
  Dataset synth = synthetic_motif_dataset(30, 123);
  save_tu_dataset(synth, (tmp.path / "NCI1").string(), "NCI1");

  RunSpec stats = parse_run_spec(
      {"stats", "--dataset", "NCI-1", "--data-dir", tmp.path.string()});
  Dataset loaded = load_dataset_for(stats);
  CHECK(loaded.graphs.size() == 30);
  CHECK(run(stats) == 0);

  RunSpec train = parse_run_spec(
      {"train", "--dataset", "NCI1", "--data-dir", tmp.path.string(),
       "--hidden-dim", "4", "--num-blocks", "1", "--folds", "3",
       "--epochs", "1", "--batch-size", "8",
       "--out-dir", (tmp.path / "out").string()});
  CHECK(run(train) == 0);
  CHECK(fs::exists(tmp.path / "out" / "metrics.json"));
}

TEST_CASE("cli_main maps failures to nonzero exit codes") {
  auto call = [](std::vector<std::string> args) {
    std::vector<char*> argv;
    static std::string prog = "gsapool";
    argv.push_back(prog.data());
    for (auto& a : args) argv.push_back(a.data());
    return cli_main(static_cast<int>(argv.size()), argv.data());
  };
  CHECK(call({"frobnicate"}) == 2);
  CHECK(call({"train", "--ratio", "nope"}) == 2);
  CHECK(call({"stats", "--dataset", "DD", "--data-dir", "/nonexistent"}) == 1);
  CHECK(call({"--help"}) == 0);
}

TEST_CASE("export-embeddings writes a checkpoint and a csv") {
  TempDir tmp;
  std::vector<std::string> args = {"export-embeddings",
                                   "--dataset", "synthetic",
                                   "--synthetic-size", "24",
                                   "--hidden-dim", "4",
                                   "--num-blocks", "1",
                                   "--folds", "4",
                                   "--epochs", "2",
                                   "--batch-size", "8",
                                   "--out-dir", tmp.path.string()};
  CHECK(run(parse_run_spec(args)) == 0);
  CHECK(fs::exists(tmp.path / "embeddings.csv"));
  CHECK(fs::exists(tmp.path / "model.ckpt"));
  ParameterSet ps = ParameterSet::load_checkpoint(
      (tmp.path / "model.ckpt").string());
  CHECK(ps.size() > 0);

  std::ifstream is(tmp.path / "embeddings.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header.rfind("graph,label,", 0) == 0);
}
