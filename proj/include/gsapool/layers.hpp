#pragma once

#include <string>
#include <vector>

#include "gsapool/graph.hpp"
#include "gsapool/params.hpp"
#include "gsapool/rng.hpp"
#include "gsapool/tensor.hpp"

namespace gsapool {

enum class Activation { none, relu, tanh, sigmoid };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
Tensor apply_activation(const Tensor& x, Activation a);

/// Spectral convolution: act(D^{-1/2}(A+I)D^{-1/2} X W).
Tensor gcn_forward(const Graph& g, const Tensor& x, const Tensor& w,
                   Activation act = Activation::none);

/// Rescaled symmetric Laplacian 2 L_sym / lambda_max - I with lambda_max
/// fixed at 2. Rows of isolated nodes are zero in L_sym, so an edgeless
/// graph yields -I.
Tensor scaled_laplacian(const Graph& g);

/// Chebyshev convolution: sum_k T_k(L_hat) X W_k.
Tensor cheb_forward(const Graph& g, const Tensor& x,
                    const std::vector<Tensor>& ws,
                    Activation act = Activation::none);

/// Mean-aggregator embedding: act(concat(x, mean of neighbor features) W).
/// Isolated nodes use a zero vector as the neighbor mean; w is 2*in x out.
Tensor sage_forward(const Graph& g, const Tensor& x, const Tensor& w,
                    Activation act = Activation::none);

struct GatParams {
  Tensor weight;  // in x out
  Tensor attn;    // 2*out x 1
};

/// Attention aggregation with self-loops in every neighborhood. Attention
/// logits are leaky-relu(a^T [W h_i || W h_j]) normalized per node by a
/// segment softmax; multi-head outputs are averaged.
Tensor gat_forward(const Graph& g, const Tensor& x,
                   const std::vector<GatParams>& heads,
                   Activation act = Activation::none, double leaky_slope = 0.2);

inline Tensor gat_forward(const Graph& g, const Tensor& x, const Tensor& w,
                          const Tensor& a, Activation act = Activation::none,
                          double leaky_slope = 0.2) {
  return gat_forward(g, x, {GatParams{w, a}}, act, leaky_slope);
}

/// Attention coefficients of one head, aligned with (src, dst) edge arrays
/// (self-loops included, grouped by destination). Inspection only.
struct GatAttention {
  std::vector<int> src, dst;
  std::vector<double> weight;
};
GatAttention gat_attention(const Graph& g, const Tensor& x,
                           const GatParams& head, double leaky_slope = 0.2);

struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Activation hidden_act = Activation::relu;
  Activation final_act = Activation::none;
};

/// Per-row feedforward network; graph structure is not consulted.
Tensor mlp_forward(const Tensor& x, const Mlp& mlp);

// ---- parameter factories (Glorot-uniform init, registered by name) ---------

Tensor make_weight(ParameterSet& ps, const std::string& name, std::size_t in,
                   std::size_t out, Rng& rng);
Tensor make_bias(ParameterSet& ps, const std::string& name, std::size_t out);
GatParams make_gat_params(ParameterSet& ps, const std::string& prefix,
                          std::size_t in, std::size_t out, Rng& rng);
Mlp make_mlp(ParameterSet& ps, const std::string& prefix, std::size_t in,
             const std::vector<std::size_t>& hidden, std::size_t out,
             Activation hidden_act, Activation final_act, Rng& rng);

}  // namespace gsapool
