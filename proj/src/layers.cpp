#include "gsapool/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace gsapool {

Activation activation_from_string(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "none";
}

Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::relu: return relu(x);
    case Activation::tanh: return gsapool::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

Tensor gcn_forward(const Graph& g, const Tensor& x, const Tensor& w,
                   Activation act) {
  if (x.rows() != static_cast<std::size_t>(g.num_nodes))
    throw std::invalid_argument("gcn_forward: feature rows != node count");
  Tensor n = normalized_adjacency(g);
  return apply_activation(matmul(matmul(n, x), w), act);
}

Tensor scaled_laplacian(const Graph& g) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (!g.neighbors[i].empty())
      inv_sqrt_deg[i] =
          1.0 / std::sqrt(static_cast<double>(g.neighbors[i].size()));

  // L_hat = L_sym - I; isolated nodes have an all-zero L_sym row
  std::vector<double> vals(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    vals[i * n + i] = g.neighbors[i].empty() ? -1.0 : 0.0;
  for (const auto& [a, b] : g.edges)
    vals[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] =
        -inv_sqrt_deg[static_cast<std::size_t>(a)] *
        inv_sqrt_deg[static_cast<std::size_t>(b)];
  return Tensor(n, n, std::move(vals));
}

Tensor cheb_forward(const Graph& g, const Tensor& x,
                    const std::vector<Tensor>& ws, Activation act) {
  if (ws.empty())
    throw std::invalid_argument("cheb_forward: need at least one weight");
  if (x.rows() != static_cast<std::size_t>(g.num_nodes))
    throw std::invalid_argument("cheb_forward: feature rows != node count");

  Tensor acc = matmul(x, ws[0]);  // T_0 = I
  if (ws.size() == 1) return apply_activation(acc, act);

  Tensor lap = scaled_laplacian(g);
  Tensor z_prev = x;
  Tensor z = matmul(lap, x);  // T_1 = L_hat
  acc = add(acc, matmul(z, ws[1]));
  for (std::size_t k = 2; k < ws.size(); ++k) {
    Tensor z_next = sub(scalar_mul(matmul(lap, z), 2.0), z_prev);
    acc = add(acc, matmul(z_next, ws[k]));
    z_prev = z;
    z = z_next;
  }
  return apply_activation(acc, act);
}

Tensor sage_forward(const Graph& g, const Tensor& x, const Tensor& w,
                    Activation act) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  if (x.rows() != n)
    throw std::invalid_argument("sage_forward: feature rows != node count");
  if (w.rows() != 2 * x.cols())
    throw std::invalid_argument("sage_forward: weight rows must be 2*in_dim");

  // row-normalized adjacency without self-loops; isolated rows stay zero
  std::vector<double> mean_op(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nbrs = g.neighbors[i];
    if (nbrs.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (int j : nbrs) mean_op[i * n + static_cast<std::size_t>(j)] = inv;
  }
  Tensor neighbor_mean = matmul(Tensor(n, n, std::move(mean_op)), x);
  return apply_activation(matmul(concat_cols(x, neighbor_mean), w), act);
}

namespace {

// edges grouped by destination, self-loop included in every neighborhood,
// sources ascending within each group
void gat_edge_index(const Graph& g, std::vector<int>& src,
                    std::vector<int>& dst) {
  src.reserve(g.edges.size() + static_cast<std::size_t>(g.num_nodes));
  dst.reserve(src.capacity());
  for (int i = 0; i < g.num_nodes; ++i) {
    bool placed_self = false;
    for (int j : g.neighbors[static_cast<std::size_t>(i)]) {
      if (!placed_self && j > i) {
        src.push_back(i);
        dst.push_back(i);
        placed_self = true;
      }
      src.push_back(j);
      dst.push_back(i);
    }
    if (!placed_self) {
      src.push_back(i);
      dst.push_back(i);
    }
  }
}

Tensor gat_attention_weights(const Tensor& x, const GatParams& head,
                             const std::vector<int>& src,
                             const std::vector<int>& dst, double leaky_slope,
                             Tensor* h_out) {
  if (head.attn.rows() != 2 * head.weight.cols() || head.attn.cols() != 1)
    throw std::invalid_argument(
        "gat_forward: attention vector must be 2*out_dim x 1");
  Tensor h = matmul(x, head.weight);
  Tensor logits = leaky_relu(
      matmul(concat_cols(gather_rows(h, dst), gather_rows(h, src)), head.attn),
      leaky_slope);
  if (h_out) *h_out = h;
  return segment_softmax(logits, dst);
}

}  // namespace

Tensor gat_forward(const Graph& g, const Tensor& x,
                   const std::vector<GatParams>& heads, Activation act,
                   double leaky_slope) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  if (x.rows() != n)
    throw std::invalid_argument("gat_forward: feature rows != node count");
  if (heads.empty())
    throw std::invalid_argument("gat_forward: need at least one head");

  std::vector<int> src, dst;
  gat_edge_index(g, src, dst);

  Tensor out;
  for (const GatParams& head : heads) {
    Tensor h;
    Tensor alpha = gat_attention_weights(x, head, src, dst, leaky_slope, &h);
    Tensor head_out =
        segment_sum(scale_rows(gather_rows(h, src), alpha), dst, n);
    out = out.defined() ? add(out, head_out) : head_out;
  }
  if (heads.size() > 1)
    out = scalar_mul(out, 1.0 / static_cast<double>(heads.size()));
  return apply_activation(out, act);
}

GatAttention gat_attention(const Graph& g, const Tensor& x,
                           const GatParams& head, double leaky_slope) {
  NoGradGuard no_grad;
  GatAttention att;
  gat_edge_index(g, att.src, att.dst);
  att.weight =
      gat_attention_weights(x, head, att.src, att.dst, leaky_slope, nullptr)
          .values();
  return att;
}

Tensor mlp_forward(const Tensor& x, const Mlp& mlp) {
  if (mlp.weights.empty() || mlp.weights.size() != mlp.biases.size())
    throw std::invalid_argument("mlp_forward: malformed layer list");
  Tensor h = x;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    h = add_rowvec(matmul(h, mlp.weights[l]), mlp.biases[l]);
    h = apply_activation(
        h, l + 1 < mlp.weights.size() ? mlp.hidden_act : mlp.final_act);
  }
  return h;
}

Tensor make_weight(ParameterSet& ps, const std::string& name, std::size_t in,
                   std::size_t out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> vals(in * out);
  for (auto& v : vals) v = rng.uniform(-s, s);
  return ps.add(name, Tensor(in, out, std::move(vals), /*requires_grad=*/true));
}

Tensor make_bias(ParameterSet& ps, const std::string& name, std::size_t out) {
  return ps.add(name, Tensor::zeros(1, out, /*requires_grad=*/true));
}

GatParams make_gat_params(ParameterSet& ps, const std::string& prefix,
                          std::size_t in, std::size_t out, Rng& rng) {
  GatParams p;
  p.weight = make_weight(ps, prefix + "weight", in, out, rng);
  p.attn = make_weight(ps, prefix + "attn", 2 * out, 1, rng);
  return p;
}

Mlp make_mlp(ParameterSet& ps, const std::string& prefix, std::size_t in,
             const std::vector<std::size_t>& hidden, std::size_t out,
             Activation hidden_act, Activation final_act, Rng& rng) {
  Mlp mlp;
  mlp.hidden_act = hidden_act;
  mlp.final_act = final_act;
  std::size_t prev = in;
  for (std::size_t l = 0; l <= hidden.size(); ++l) {
    const std::size_t width = l < hidden.size() ? hidden[l] : out;
    const std::string stem = prefix + "layer" + std::to_string(l) + ".";
    mlp.weights.push_back(make_weight(ps, stem + "weight", prev, width, rng));
    mlp.biases.push_back(make_bias(ps, stem + "bias", width));
    prev = width;
  }
  return mlp;
}

}  // namespace gsapool
