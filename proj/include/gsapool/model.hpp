#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsapool/dataset.hpp"
#include "gsapool/graph.hpp"
#include "gsapool/params.hpp"
#include "gsapool/pool.hpp"

namespace gsapool {

struct ModelConfig {
  int hidden_dim = 128;
  int num_blocks = 3;
  PoolConfig pool;
  // hidden widths of the classifier; empty means {hidden, hidden/2}
  std::vector<int> classifier_hidden;
  double dropout_rate = 0.5;

  void validate() const;
};

struct TrainConfig {
  int epochs = 300;
  int batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  int patience = 50;
  std::uint64_t seed = 1;
  int folds = 10;

  void validate() const;
};

/// Hierarchical classifier: num_blocks of {spectral convolution (relu) ->
/// pooling}, a mean||max readout after every block summed across blocks,
/// then an MLP head with log-softmax outputs.
class Model {
 public:
  Model(const ModelConfig& cfg, int feature_dim, int num_classes, Rng& rng);

  struct Output {
    Tensor log_probs;  // 1 x num_classes
    Tensor embedding;  // 1 x 2*hidden, the summed readout
    std::vector<int> nodes_per_block;  // node counts after each pooling step
  };

  /// Dropout is applied on classifier hidden activations only, and only when
  /// training is true (which then requires a dropout rng).
  Output forward(const Graph& g, bool training = false,
                 Rng* dropout_rng = nullptr) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  int feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }

 private:
  struct Block {
    Tensor backbone_weight;
    PoolParams pool;
  };

  ModelConfig cfg_;
  int feature_dim_ = 0;
  int num_classes_ = 0;
  ParameterSet params_;
  std::vector<Block> blocks_;
  std::vector<Tensor> classifier_weights_;
  std::vector<Tensor> classifier_biases_;
};

/// Negative log-likelihood of one graph: -log_probs[label].
Tensor nll_loss(const Tensor& log_probs, int label);

/// Fraction of graphs whose argmax class matches the label (no grad).
double evaluate_accuracy(const Model& model,
                         const std::vector<const Graph*>& graphs);

/// Mean negative log-likelihood over graphs (no grad).
double mean_nll(const Model& model, const std::vector<const Graph*>& graphs);

struct FoldCurves {
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  int best_epoch = -1;
};

struct FoldOutcome {
  Model model;  // restored to the best-validation checkpoint
  FoldCurves curves;
};

/// Mini-batch Adam training with early stopping on the validation loss.
/// Deterministic for a fixed seed.
FoldOutcome train_fold(const std::vector<const Graph*>& train,
                       const std::vector<const Graph*>& valid,
                       const ModelConfig& mcfg, const TrainConfig& tcfg,
                       int feature_dim, int num_classes, std::uint64_t seed);

struct Metrics {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over folds
  std::vector<FoldCurves> curves;

  void finalize();
};

/// k-fold protocol: test = fold f, validation = fold (f+1) mod k, train =
/// the rest; per-fold seed = base seed + fold index. Folds run concurrently
/// when jobs > 1 with identical results.
Metrics cross_validate(const Dataset& d, const ModelConfig& mcfg,
                       const TrainConfig& tcfg, int jobs = 1);

/// One row per graph: id, label, then the embedding values.
void write_embeddings_csv(const std::string& path, const Dataset& d,
                          const Model& model);

/// Finite-difference checks for every layer, the pooling step and the full
/// model. Prints one line per check; returns true when all pass.
bool run_gradient_suite(std::ostream& os);

}  // namespace gsapool
