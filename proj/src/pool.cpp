#include "gsapool/pool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gsapool {

ScoreKernel score_kernel_from_string(const std::string& s) {
  if (s == "gcn") return ScoreKernel::gcn;
  if (s == "cheb") return ScoreKernel::cheb;
  if (s == "sage") return ScoreKernel::sage;
  if (s == "gat") return ScoreKernel::gat;
  throw std::invalid_argument("unknown score kernel '" + s + "'");
}

std::string to_string(ScoreKernel k) {
  switch (k) {
    case ScoreKernel::gcn: return "gcn";
    case ScoreKernel::cheb: return "cheb";
    case ScoreKernel::sage: return "sage";
    case ScoreKernel::gat: return "gat";
  }
  return "gcn";
}

FusionKind fusion_from_string(const std::string& s) {
  if (s == "none") return FusionKind::none;
  if (s == "gcn") return FusionKind::gcn;
  if (s == "gat") return FusionKind::gat;
  throw std::invalid_argument("unknown fusion kind '" + s + "'");
}

std::string to_string(FusionKind f) {
  switch (f) {
    case FusionKind::none: return "none";
    case FusionKind::gcn: return "gcn";
    case FusionKind::gat: return "gat";
  }
  return "none";
}

void PoolConfig::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw std::invalid_argument("PoolConfig: ratio must be in (0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("PoolConfig: alpha must be in [0, 1]");
  if (fusion_hops < 1)
    throw std::invalid_argument("PoolConfig: fusion_hops must be >= 1");
  if (cheb_order < 1)
    throw std::invalid_argument("PoolConfig: cheb_order must be >= 1");
  if (gat_heads < 1)
    throw std::invalid_argument("PoolConfig: gat_heads must be >= 1");
  if (score_activation != Activation::tanh &&
      score_activation != Activation::sigmoid)
    throw std::invalid_argument(
        "PoolConfig: score activation must be tanh or sigmoid");
}

PoolParams make_pool_params(ParameterSet& ps, const std::string& prefix,
                            const PoolConfig& cfg, std::size_t in_dim,
                            Rng& rng) {
  cfg.validate();
  PoolParams p;
  switch (cfg.sbtl_kernel) {
    case ScoreKernel::gcn:
      p.sbtl_weight = make_weight(ps, prefix + "sbtl.weight", in_dim, 1, rng);
      break;
    case ScoreKernel::cheb:
      for (int k = 0; k < cfg.cheb_order; ++k)
        p.sbtl_cheb.push_back(make_weight(
            ps, prefix + "sbtl.weight" + std::to_string(k), in_dim, 1, rng));
      break;
    case ScoreKernel::sage:
      p.sbtl_weight =
          make_weight(ps, prefix + "sbtl.weight", 2 * in_dim, 1, rng);
      break;
    case ScoreKernel::gat:
      for (int h = 0; h < cfg.gat_heads; ++h)
        p.sbtl_gat.push_back(make_gat_params(
            ps, prefix + "sbtl.head" + std::to_string(h) + ".", in_dim, 1,
            rng));
      break;
  }
  // feature scorer: two layers, hidden width = in_dim, relu between
  p.fbtl = make_mlp(ps, prefix + "fbtl.", in_dim, {in_dim}, 1,
                    Activation::relu, cfg.score_activation, rng);
  switch (cfg.fusion) {
    case FusionKind::none:
      break;
    case FusionKind::gcn:
      p.fusion_weight =
          make_weight(ps, prefix + "fusion.weight", in_dim, in_dim, rng);
      break;
    case FusionKind::gat:
      for (int h = 0; h < cfg.gat_heads; ++h)
        p.fusion_gat.push_back(make_gat_params(
            ps, prefix + "fusion.head" + std::to_string(h) + ".", in_dim,
            in_dim, rng));
      break;
  }
  return p;
}

Tensor sbtl_score(const Graph& g, const Tensor& x, const PoolConfig& cfg,
                  const PoolParams& params) {
  Tensor s;
  switch (cfg.sbtl_kernel) {
    case ScoreKernel::gcn:
      s = gcn_forward(g, x, params.sbtl_weight, cfg.score_activation);
      break;
    case ScoreKernel::cheb:
      s = cheb_forward(g, x, params.sbtl_cheb, cfg.score_activation);
      break;
    case ScoreKernel::sage:
      s = sage_forward(g, x, params.sbtl_weight, cfg.score_activation);
      break;
    case ScoreKernel::gat:
      s = gat_forward(g, x, params.sbtl_gat, cfg.score_activation,
                      cfg.gat_leaky_slope);
      break;
  }
  if (s.cols() != 1)
    throw std::invalid_argument("sbtl_score: kernel output width must be 1");
  return s;
}

Tensor fbtl_score(const Tensor& x, const PoolParams& params) {
  Tensor s = mlp_forward(x, params.fbtl);
  if (s.cols() != 1)
    throw std::invalid_argument("fbtl_score: scorer output width must be 1");
  return s;
}

Tensor sftl_combine(const Tensor& s1, const Tensor& s2, double alpha) {
  if (s1.rows() != s2.rows() || s1.cols() != 1 || s2.cols() != 1)
    throw std::invalid_argument("sftl_combine: score length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("sftl_combine: alpha must be in [0, 1]");
  return add(scalar_mul(s1, alpha), scalar_mul(s2, 1.0 - alpha));
}

std::vector<int> top_k_select(const std::vector<double>& scores,
                              double ratio) {
  if (scores.empty())
    throw std::invalid_argument("top_k_select: empty score vector");
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw std::invalid_argument("top_k_select: ratio must be in (0, 1]");
  const std::size_t n = scores.size();
  // small slack so ratios like 0.1 * 10 do not round up to 2
  const auto k = static_cast<std::size_t>(std::max(
      1L, std::lround(std::ceil(ratio * static_cast<double>(n) - 1e-9))));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] !=
        scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] >
             scores[static_cast<std::size_t>(b)];
    return a < b;  // ties go to the lower original index
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

Tensor fuse_features(const Graph& g, const Tensor& x, const PoolConfig& cfg,
                     const PoolParams& params) {
  if (cfg.fusion == FusionKind::none) return x;
  Tensor h = x;
  for (int hop = 0; hop < cfg.fusion_hops; ++hop) {
    if (cfg.fusion == FusionKind::gcn)
      h = gcn_forward(g, h, params.fusion_weight, Activation::relu);
    else
      h = gat_forward(g, h, params.fusion_gat, Activation::relu,
                      cfg.gat_leaky_slope);
  }
  return h;
}

PoolingResult gsapool_forward(const Graph& g, const Tensor& x,
                              const PoolConfig& cfg,
                              const PoolParams& params) {
  cfg.validate();
  PoolingResult out;
  out.scores.s1 = sbtl_score(g, x, cfg, params);
  out.scores.s2 = fbtl_score(x, params);
  out.scores.s_final = sftl_combine(out.scores.s1, out.scores.s2, cfg.alpha);

  out.selected = top_k_select(out.scores.s_final.values(), cfg.ratio);

  Tensor fused = fuse_features(g, x, cfg, params);
  Tensor gate = gather_rows(out.scores.s_final, out.selected);
  Tensor pooled_features = scale_rows(gather_rows(fused, out.selected), gate);
  out.pooled_graph = induced_subgraph(g, out.selected, pooled_features);
  return out;
}

Tensor gpool_score(const Tensor& x, const Tensor& p) {
  if (p.cols() != 1 || p.rows() != x.cols())
    throw std::invalid_argument("gpool_score: projection must be in_dim x 1");
  double norm_sq = 0.0;
  for (double v : p.values()) norm_sq += v * v;
  if (std::sqrt(norm_sq) < 1e-12)
    throw std::invalid_argument("degenerate projection vector");
  Tensor inv_norm = reciprocal(sqrt_elem(sum_all(mul(p, p))));
  return scale_all(matmul(x, p), inv_norm);
}

Tensor sagpool_score(const Graph& g, const Tensor& x, const Tensor& w,
                     Activation score_activation) {
  Tensor s = gcn_forward(g, x, w, score_activation);
  if (s.cols() != 1)
    throw std::invalid_argument("sagpool_score: output width must be 1");
  return s;
}

}  // namespace gsapool
