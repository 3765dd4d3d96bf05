#include "gsapool/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gsapool {

namespace {

thread_local bool g_grad_enabled = true;

thread_local bool g_kink_armed = false;
thread_local std::vector<double> g_kink_trace;

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": bad shape " + shape_str(a));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a,
                              const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

Tensor make_out(std::size_t rows, std::size_t cols, std::vector<double> vals) {
  return Tensor(rows, cols, std::move(vals), false);
}

// Marks the output as gradient-tracked and records the backprop closure when
// any input requires grad and recording is enabled.
void record_op(const Tensor& out, std::vector<detail::NodePtr> inputs,
               std::function<void()> backprop) {
  if (!g_grad_enabled) return;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (!needs) return;
  out.node()->requires_grad = true;
  Tape::active().record(out.shared_node(), std::move(inputs),
                        std::move(backprop));
}

// Backward closures must only touch adjoints of gradient-tracked nodes:
// constants (e.g. dataset features, adjacency operators) may be shared
// across worker threads.
inline bool wants_adj(const detail::TensorNode* n) { return n->requires_grad; }

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
               bool requires_grad) {
  if (values.size() != rows * cols)
    throw std::invalid_argument("Tensor: buffer length does not match shape");
  node_ = std::make_shared<detail::TensorNode>();
  node_->rows = rows;
  node_->cols = cols;
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(rows, cols, std::vector<double>(rows * cols, 0.0),
                requires_grad);
}

Tensor Tensor::constant(std::size_t rows, std::size_t cols, double value,
                        bool requires_grad) {
  return Tensor(rows, cols, std::vector<double>(rows * cols, value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(1, 1, {value}, requires_grad);
}

Tensor Tensor::row(const std::vector<double>& v, bool requires_grad) {
  return Tensor(1, v.size(), v, requires_grad);
}

Tensor Tensor::column(const std::vector<double>& v, bool requires_grad) {
  return Tensor(v.size(), 1, v, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) t.mutable_values()[i * n + i] = 1.0;
  return t;
}

double Tensor::item() const {
  if (size() != 1) shape_error("item", *this);
  return node_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    throw std::runtime_error("Tensor::grad: no gradient has been computed");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->values.size(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(rows(), cols(), node_->values, false);
}

// ---- Tape ------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(detail::NodePtr out, std::vector<detail::NodePtr> inputs,
                  std::function<void()> backprop) {
  entries_.push_back(
      Entry{std::move(out), std::move(inputs), std::move(backprop)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");

  // Reset scratch adjoints of every gradient-tracked node on the tape.
  auto reset = [](const detail::NodePtr& n) {
    if (wants_adj(n.get())) n->adj.assign(n->values.size(), 0.0);
  };
  for (auto& e : entries_) {
    reset(e.out);
    for (auto& in : e.inputs) reset(in);
  }

  loss.node()->adj.assign(1, 1.0);

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backprop();

  // Flush adjoints into persistent gradients, once per node, in a fixed order.
  std::unordered_set<detail::TensorNode*> seen;
  auto flush = [&seen](const detail::NodePtr& n) {
    if (!n->requires_grad || n->adj.empty()) return;
    if (!seen.insert(n.get()).second) return;
    if (n->grad.size() != n->values.size())
      n->grad.assign(n->values.size(), 0.0);
    for (std::size_t i = 0; i < n->adj.size(); ++i) n->grad[i] += n->adj[i];
  };
  flush(loss.shared_node());
  for (auto& e : entries_) {
    flush(e.out);
    for (auto& in : e.inputs) flush(in);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- KinkMonitor ------------------------------------------------------------

namespace detail {

void KinkMonitor::arm() {
  g_kink_armed = true;
  g_kink_trace.clear();
}
void KinkMonitor::disarm() { g_kink_armed = false; }
bool KinkMonitor::armed() { return g_kink_armed; }
const std::vector<double>& KinkMonitor::trace() { return g_kink_trace; }
void KinkMonitor::observe(double abs_value) {
  g_kink_trace.push_back(abs_value);
}

}  // namespace detail

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* po = out.data() + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* pbr = pb + kk * m;
      for (std::size_t j = 0; j < m; ++j) po[j] += aik * pbr[j];
    }
  }
  Tensor res = make_out(n, m, std::move(out));
  record_op(res, {a.shared_node(), b.shared_node()},
            [an = a.shared_node(), bn = b.shared_node(),
             on = res.shared_node(), n, k, m]() {
              const double* g = on->adj.data();
              if (wants_adj(an.get())) {
                // dA += g * B^T
                double* da = an->adj.data();
                const double* pb = bn->values.data();
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t kk = 0; kk < k; ++kk) {
                    double acc = 0.0;
                    const double* gr = g + i * m;
                    const double* br = pb + kk * m;
                    for (std::size_t j = 0; j < m; ++j) acc += gr[j] * br[j];
                    da[i * k + kk] += acc;
                  }
              }
              if (wants_adj(bn.get())) {
                // dB += A^T * g
                double* db = bn->adj.data();
                const double* pa = an->values.data();
                for (std::size_t kk = 0; kk < k; ++kk)
                  for (std::size_t i = 0; i < n; ++i) {
                    const double aik = pa[i * k + kk];
                    if (aik == 0.0) continue;
                    const double* gr = g + i * m;
                    double* dbr = db + kk * m;
                    for (std::size_t j = 0; j < m; ++j) dbr[j] += aik * gr[j];
                  }
              }
            });
  return res;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  Tensor res = make_out(a.rows(), a.cols(), std::move(out));
  record_op(res, {a.shared_node(), b.shared_node()},
            [an = a.shared_node(), bn = b.shared_node(),
             on = res.shared_node()]() {
              const auto& g = on->adj;
              if (wants_adj(an.get()))
                for (std::size_t i = 0; i < g.size(); ++i) an->adj[i] += g[i];
              if (wants_adj(bn.get()))
                for (std::size_t i = 0; i < g.size(); ++i) bn->adj[i] += g[i];
            });
  return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  Tensor res = make_out(a.rows(), a.cols(), std::move(out));
  record_op(res, {a.shared_node(), b.shared_node()},
            [an = a.shared_node(), bn = b.shared_node(),
             on = res.shared_node()]() {
              const auto& g = on->adj;
              if (wants_adj(an.get()))
                for (std::size_t i = 0; i < g.size(); ++i) an->adj[i] += g[i];
              if (wants_adj(bn.get()))
                for (std::size_t i = 0; i < g.size(); ++i) bn->adj[i] -= g[i];
            });
  return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  Tensor res = make_out(a.rows(), a.cols(), std::move(out));
  record_op(res, {a.shared_node(), b.shared_node()},
            [an = a.shared_node(), bn = b.shared_node(),
             on = res.shared_node()]() {
              const auto& g = on->adj;
              if (wants_adj(an.get()))
                for (std::size_t i = 0; i < g.size(); ++i)
                  an->adj[i] += g[i] * bn->values[i];
              if (wants_adj(bn.get()))
                for (std::size_t i = 0; i < g.size(); ++i)
                  bn->adj[i] += g[i] * an->values[i];
            });
  return res;
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  Tensor res = make_out(a.rows(), a.cols(), std::move(out));
  record_op(res, {a.shared_node()},
            [an = a.shared_node(), on = res.shared_node(), c]() {
              if (!wants_adj(an.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < g.size(); ++i) an->adj[i] += c * g[i];
            });
  return res;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) shape_error("add_rowvec", x, b);
  std::vector<double> out(x.size());
  const std::size_t n = x.rows(), m = x.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out[i * m + j] = x.values()[i * m + j] + b.values()[j];
  Tensor res = make_out(n, m, std::move(out));
  record_op(res, {x.shared_node(), b.shared_node()},
            [xn = x.shared_node(), bn = b.shared_node(),
             on = res.shared_node(), n, m]() {
              const auto& g = on->adj;
              if (wants_adj(xn.get()))
                for (std::size_t i = 0; i < g.size(); ++i) xn->adj[i] += g[i];
              if (wants_adj(bn.get()))
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < m; ++j)
                    bn->adj[j] += g[i * m + j];
            });
  return res;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != x.rows()) shape_error("scale_rows", x, s);
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out[i * m + j] = x.values()[i * m + j] * s.values()[i];
  Tensor res = make_out(n, m, std::move(out));
  record_op(res, {x.shared_node(), s.shared_node()},
            [xn = x.shared_node(), sn = s.shared_node(),
             on = res.shared_node(), n, m]() {
              const auto& g = on->adj;
              if (wants_adj(xn.get()))
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < m; ++j)
                    xn->adj[i * m + j] += g[i * m + j] * sn->values[i];
              if (wants_adj(sn.get()))
                for (std::size_t i = 0; i < n; ++i) {
                  double acc = 0.0;
                  for (std::size_t j = 0; j < m; ++j)
                    acc += g[i * m + j] * xn->values[i * m + j];
                  sn->adj[i] += acc;
                }
            });
  return res;
}

Tensor scale_all(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) shape_error("scale_all", x, s);
  const double c = s.values()[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * c;
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node(), s.shared_node()},
            [xn = x.shared_node(), sn = s.shared_node(),
             on = res.shared_node(), c]() {
              const auto& g = on->adj;
              if (wants_adj(xn.get()))
                for (std::size_t i = 0; i < g.size(); ++i)
                  xn->adj[i] += g[i] * c;
              if (wants_adj(sn.get())) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i)
                  acc += g[i] * xn->values[i];
                sn->adj[0] += acc;
              }
            });
  return res;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  const std::size_t n = a.rows(), ma = a.cols(), mb = b.cols();
  std::vector<double> out(n * (ma + mb));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ma; ++j)
      out[i * (ma + mb) + j] = a.values()[i * ma + j];
    for (std::size_t j = 0; j < mb; ++j)
      out[i * (ma + mb) + ma + j] = b.values()[i * mb + j];
  }
  Tensor res = make_out(n, ma + mb, std::move(out));
  record_op(res, {a.shared_node(), b.shared_node()},
            [an = a.shared_node(), bn = b.shared_node(),
             on = res.shared_node(), n, ma, mb]() {
              const auto& g = on->adj;
              if (wants_adj(an.get()))
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < ma; ++j)
                    an->adj[i * ma + j] += g[i * (ma + mb) + j];
              if (wants_adj(bn.get()))
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < mb; ++j)
                    bn->adj[i * mb + j] += g[i * (ma + mb) + ma + j];
            });
  return res;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  const std::size_t m = x.cols();
  std::vector<double> out(idx.size() * m);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int r = idx[i];
    if (r < 0 || static_cast<std::size_t>(r) >= x.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    for (std::size_t j = 0; j < m; ++j)
      out[i * m + j] = x.values()[static_cast<std::size_t>(r) * m + j];
  }
  Tensor res = make_out(idx.size(), m, std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), idx, m]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < idx.size(); ++i) {
                double* dst =
                    xn->adj.data() + static_cast<std::size_t>(idx[i]) * m;
                const double* src = g.data() + i * m;
                for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
              }
            });
  return res;
}

Tensor sum_rows(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += x.values()[i * m + j];
  Tensor res = make_out(1, m, std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), n, m]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) xn->adj[i * m + j] += g[j];
            });
  return res;
}

Tensor mean_rows(const Tensor& x) {
  if (x.rows() == 0) shape_error("mean_rows", x);
  return scalar_mul(sum_rows(x), 1.0 / static_cast<double>(x.rows()));
}

Tensor max_rows(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  if (n == 0) shape_error("max_rows", x);
  std::vector<double> out(m);
  std::vector<std::size_t> argmax(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    double best = x.values()[j];
    std::size_t bi = 0;
    for (std::size_t i = 1; i < n; ++i) {
      const double v = x.values()[i * m + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out[j] = best;
    argmax[j] = bi;
  }
  Tensor res = make_out(1, m, std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(),
             argmax = std::move(argmax), m]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t j = 0; j < m; ++j)
                xn->adj[argmax[j] * m + j] += g[j];
            });
  return res;
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor res = make_out(1, 1, {acc});
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node()]() {
              if (!wants_adj(xn.get())) return;
              const double g = on->adj[0];
              for (double& a : xn->adj) a += g;
            });
  return res;
}

Tensor pick(const Tensor& x, std::size_t r, std::size_t c) {
  if (r >= x.rows() || c >= x.cols()) shape_error("pick", x);
  const std::size_t flat = r * x.cols() + c;
  Tensor res = make_out(1, 1, {x.values()[flat]});
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), flat]() {
              if (wants_adj(xn.get())) xn->adj[flat] += on->adj[0];
            });
  return res;
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::tanh(x.values()[i]);
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node()]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < g.size(); ++i)
                xn->adj[i] += g[i] * (1.0 - on->values[i] * on->values[i]);
            });
  return res;
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node()]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = on->values[i];
                xn->adj[i] += g[i] * y * (1.0 - y);
              }
            });
  return res;
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  double kink = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    out[i] = v > 0.0 ? v : 0.0;
    const double d = std::abs(v);
    if (d < kink) kink = d;
  }
  if (detail::KinkMonitor::armed()) detail::KinkMonitor::observe(kink);
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node()]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              // subgradient 0 at exactly 0
              for (std::size_t i = 0; i < g.size(); ++i)
                if (xn->values[i] > 0.0) xn->adj[i] += g[i];
            });
  return res;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.size());
  double kink = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    out[i] = v > 0.0 ? v : slope * v;
    const double d = std::abs(v);
    if (d < kink) kink = d;
  }
  if (detail::KinkMonitor::armed()) detail::KinkMonitor::observe(kink);
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), slope]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < g.size(); ++i)
                xn->adj[i] += g[i] * (xn->values[i] > 0.0 ? 1.0 : slope);
            });
  return res;
}

Tensor sqrt_elem(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::sqrt(x.values()[i]);
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node()]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < g.size(); ++i)
                xn->adj[i] += g[i] * 0.5 / on->values[i];
            });
  return res;
}

Tensor reciprocal(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / x.values()[i];
  Tensor res = make_out(x.rows(), x.cols(), std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node()]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < g.size(); ++i)
                xn->adj[i] -= g[i] * on->values[i] * on->values[i];
            });
  return res;
}

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = x.values().data() + i * m;
    double mx = r[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(r[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = r[j] - lz;
  }
  Tensor res = make_out(n, m, std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), n, m]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < n; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < m; ++j) gs += g[i * m + j];
                for (std::size_t j = 0; j < m; ++j)
                  xn->adj[i * m + j] +=
                      g[i * m + j] - std::exp(on->values[i * m + j]) * gs;
              }
            });
  return res;
}

namespace {

void check_segments(const char* op, const std::vector<int>& seg,
                    std::size_t rows) {
  if (seg.size() != rows)
    throw std::invalid_argument(std::string(op) +
                                ": segment ids do not match rows");
  for (std::size_t i = 0; i + 1 < seg.size(); ++i)
    if (seg[i] > seg[i + 1])
      throw std::invalid_argument(std::string(op) +
                                  ": segment ids must be nondecreasing");
  if (!seg.empty() && seg.front() < 0)
    throw std::invalid_argument(std::string(op) + ": negative segment id");
}

}  // namespace

Tensor segment_softmax(const Tensor& x, const std::vector<int>& seg) {
  if (x.cols() != 1) shape_error("segment_softmax", x);
  check_segments("segment_softmax", seg, x.rows());
  const std::size_t n = x.rows();
  std::vector<double> out(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end < n && seg[end] == seg[start]) ++end;
    double mx = x.values()[start];
    for (std::size_t i = start; i < end; ++i)
      mx = std::max(mx, x.values()[i]);
    double z = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      out[i] = std::exp(x.values()[i] - mx);
      z += out[i];
    }
    for (std::size_t i = start; i < end; ++i) out[i] /= z;
    start = end;
  }
  Tensor res = make_out(n, 1, std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), seg, n]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              const auto& y = on->values;
              std::size_t start = 0;
              while (start < n) {
                std::size_t end = start;
                while (end < n && seg[end] == seg[start]) ++end;
                double dot = 0.0;
                for (std::size_t i = start; i < end; ++i) dot += y[i] * g[i];
                for (std::size_t i = start; i < end; ++i)
                  xn->adj[i] += y[i] * (g[i] - dot);
                start = end;
              }
            });
  return res;
}

Tensor segment_sum(const Tensor& x, const std::vector<int>& seg,
                   std::size_t num_segments) {
  check_segments("segment_sum", seg, x.rows());
  const std::size_t m = x.cols();
  for (int s : seg)
    if (static_cast<std::size_t>(s) >= num_segments)
      throw std::invalid_argument("segment_sum: segment id out of range");
  std::vector<double> out(num_segments * m, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j)
      out[static_cast<std::size_t>(seg[i]) * m + j] += x.values()[i * m + j];
  Tensor res = make_out(num_segments, m, std::move(out));
  record_op(res, {x.shared_node()},
            [xn = x.shared_node(), on = res.shared_node(), seg, m]() {
              if (!wants_adj(xn.get())) return;
              const auto& g = on->adj;
              for (std::size_t i = 0; i < seg.size(); ++i)
                for (std::size_t j = 0; j < m; ++j)
                  xn->adj[i * m + j] +=
                      g[static_cast<std::size_t>(seg[i]) * m + j];
            });
  return res;
}

// ---- gradient_check ----------------------------------------------------------

namespace {

// A coordinate is unreliable when some activation sits near its kink AND the
// perturbation moves that activation far enough that its branch could flip,
// or when the op sequence itself changed (a selection flip). Activations
// pinned at a kink but independent of the coordinate are fine: both the
// finite difference and the subgradient see the same constant branch. So is
// an activation that responds by far less than its distance to the kink.
bool kink_unreliable(const std::vector<double>& base,
                     const std::vector<double>& plus,
                     const std::vector<double>& minus, double kink_tol) {
  if (base.size() != plus.size() || base.size() != minus.size()) return true;
  for (std::size_t o = 0; o < base.size(); ++o) {
    const double closest = std::min({base[o], plus[o], minus[o]});
    if (closest >= kink_tol) continue;
    const double movement = std::max(std::abs(plus[o] - base[o]),
                                     std::abs(minus[o] - base[o]));
    if (movement > 0.0 && 2.0 * movement >= closest) return true;
  }
  return false;
}

}  // namespace

GradCheckReport gradient_check(const std::function<Tensor(const Tensor&)>& f,
                               Tensor x, double tol, double step,
                               double kink_tol) {
  GradCheckReport report;
  if (!x.requires_grad()) x.set_requires_grad(true);

  Tape::active().clear();
  x.zero_grad();
  detail::KinkMonitor::arm();
  Tensor y = f(x);
  const std::vector<double> base_trace = detail::KinkMonitor::trace();
  detail::KinkMonitor::disarm();
  if (y.size() != 1)
    throw std::invalid_argument("gradient_check: f must return a scalar");
  backward(y);
  std::vector<double> analytic = x.has_grad()
                                     ? x.grad()
                                     : std::vector<double>(x.size(), 0.0);
  Tape::active().clear();

  auto& vals = x.mutable_values();
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double v = vals[i];

    detail::KinkMonitor::arm();
    vals[i] = v + step;
    const double fp = f(x).item();
    const std::vector<double> plus_trace = detail::KinkMonitor::trace();

    detail::KinkMonitor::arm();
    vals[i] = v - step;
    const double fm = f(x).item();
    const std::vector<double> minus_trace = detail::KinkMonitor::trace();
    detail::KinkMonitor::disarm();

    vals[i] = v;

    if (kink_unreliable(base_trace, plus_trace, minus_trace, kink_tol)) {
      ++report.skipped;
      report.skipped_indices.push_back(i);
      continue;
    }

    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      report.nan_found = true;
      report.nan_location = "index " + std::to_string(i) + " (analytic " +
                            std::to_string(a) + ", numeric " +
                            std::to_string(numeric) + ")";
      continue;
    }
    const double err =
        std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.pass(tol);
  return report;
}

}  // namespace gsapool
