#pragma once

#include <string>
#include <vector>

#include "gsapool/graph.hpp"
#include "gsapool/layers.hpp"
#include "gsapool/params.hpp"

namespace gsapool {

enum class ScoreKernel { gcn, cheb, sage, gat };
enum class FusionKind { none, gcn, gat };

ScoreKernel score_kernel_from_string(const std::string& s);
std::string to_string(ScoreKernel k);
FusionKind fusion_from_string(const std::string& s);
std::string to_string(FusionKind f);

struct PoolConfig {
  double ratio = 0.5;       // fraction of nodes kept, in (0, 1]
  double alpha = 0.5;       // weight of the structure score, in [0, 1]
  ScoreKernel sbtl_kernel = ScoreKernel::gcn;
  FusionKind fusion = FusionKind::gat;
  int fusion_hops = 1;
  Activation score_activation = Activation::tanh;  // tanh or sigmoid
  int cheb_order = 2;
  int gat_heads = 1;
  double gat_leaky_slope = 0.2;

  void validate() const;
};

/// Trainable tensors of one pooling block; only the tensors required by the
/// configured kernels are created.
struct PoolParams {
  Tensor sbtl_weight;               // gcn / sage kernels
  std::vector<Tensor> sbtl_cheb;    // cheb kernel
  std::vector<GatParams> sbtl_gat;  // gat kernel
  Mlp fbtl;                         // feature scorer, final width 1
  Tensor fusion_weight;             // gcn fusion
  std::vector<GatParams> fusion_gat;
};

PoolParams make_pool_params(ParameterSet& ps, const std::string& prefix,
                            const PoolConfig& cfg, std::size_t in_dim,
                            Rng& rng);

struct ScoreVector {
  Tensor s1;       // structure score
  Tensor s2;       // feature score
  Tensor s_final;  // alpha * s1 + (1 - alpha) * s2
};

struct PoolingResult {
  std::vector<int> selected;  // original node indices, ascending
  Graph pooled_graph;         // induced topology with fused, gated features
  ScoreVector scores;
};

/// Structure score: the configured GNN kernel with output width 1 under the
/// score activation.
Tensor sbtl_score(const Graph& g, const Tensor& x, const PoolConfig& cfg,
                  const PoolParams& params);

/// Feature score: per-node MLP, blind to the topology.
Tensor fbtl_score(const Tensor& x, const PoolParams& params);

/// alpha * s1 + (1 - alpha) * s2, elementwise.
Tensor sftl_combine(const Tensor& s1, const Tensor& s2, double alpha);

/// Indices of the k = max(1, ceil(ratio * n)) largest scores, ties broken
/// toward the lower original index, returned in ascending index order.
std::vector<int> top_k_select(const std::vector<double>& scores, double ratio);

/// Applies the fusion layer `fusion_hops` times so every node carries
/// aggregated neighbor information; FusionKind::none returns x unchanged.
Tensor fuse_features(const Graph& g, const Tensor& x, const PoolConfig& cfg,
                     const PoolParams& params);

/// Full pooling step: scores from the original features, fused features
/// gathered at the selected nodes and gated by their final scores, topology
/// sliced from the original adjacency.
PoolingResult gsapool_forward(const Graph& g, const Tensor& x,
                              const PoolConfig& cfg, const PoolParams& params);

/// Baseline projection scorer: y = X p / ||p||.
Tensor gpool_score(const Tensor& x, const Tensor& p);

/// Baseline spectral-convolution scorer (the adopted architecture's choice);
/// identical to the gcn-kernel structure score.
Tensor sagpool_score(const Graph& g, const Tensor& x, const Tensor& w,
                     Activation score_activation = Activation::tanh);

}  // namespace gsapool
