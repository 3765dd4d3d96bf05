#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gsapool {

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // persistent; accumulates across backward calls
  std::vector<double> adj;   // scratch adjoint for one backward sweep
  bool requires_grad = false;
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

/// Dense 2-D tensor of doubles with optional gradient tracking. Copies share
/// the underlying buffer; operations on shared handles are visible to every
/// copy (this is what lets an optimizer update parameters in place).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false);
  static Tensor constant(std::size_t rows, std::size_t cols, double value,
                         bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(const std::vector<double>& v, bool requires_grad = false);
  static Tensor column(const std::vector<double>& v,
                       bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->values.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  double at(std::size_t r, std::size_t c) const {
    return node_->values[r * node_->cols + c];
  }
  /// Value of a 1x1 tensor.
  double item() const;

  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Deep copy, detached from any tape.
  Tensor clone() const;

  detail::TensorNode* node() const { return node_.get(); }
  const detail::NodePtr& shared_node() const { return node_; }

 private:
  detail::NodePtr node_;
};

/// Ordered record of executed differentiable operations. One tape per thread;
/// workers never share a tape. Entries are appended in execution order, which
/// is a topological order of the computation, and the backward sweep replays
/// them exactly once in reverse.
class Tape {
 public:
  static Tape& active();  // thread-local instance

  void record(detail::NodePtr out, std::vector<detail::NodePtr> inputs,
              std::function<void()> backprop);

  /// Reverse sweep from a scalar loss. Adjoints are accumulated into each
  /// requires-grad tensor's persistent grad buffer, so repeated calls
  /// accumulate until zero_grad() is used.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    detail::NodePtr out;
    std::vector<detail::NodePtr> inputs;
    std::function<void()> backprop;
  };
  std::vector<Entry> entries_;
};

bool grad_enabled();

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline void backward(const Tensor& loss) { Tape::active().backward(loss); }

// ---- differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& x, const Tensor& b);   // b is 1 x cols
Tensor scale_rows(const Tensor& x, const Tensor& s);   // s is rows x 1
Tensor scale_all(const Tensor& x, const Tensor& s);    // s is 1 x 1
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
Tensor sum_rows(const Tensor& x);   // 1 x cols, sum over rows
Tensor mean_rows(const Tensor& x);  // 1 x cols
Tensor max_rows(const Tensor& x);   // 1 x cols; ties go to the first row
Tensor sum_all(const Tensor& x);    // 1 x 1
Tensor pick(const Tensor& x, std::size_t r, std::size_t c);  // 1 x 1
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sqrt_elem(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

/// Softmax within contiguous segments of a column vector. `seg` must be
/// nondecreasing and aligned with the rows of `x`.
Tensor segment_softmax(const Tensor& x, const std::vector<int>& seg);

/// Sums rows of `x` into `num_segments` buckets given by `seg` (nondecreasing).
Tensor segment_sum(const Tensor& x, const std::vector<int>& seg,
                   std::size_t num_segments);

// ---- finite-difference gradient checking ----------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;                // coordinates near activation kinks
  std::vector<std::size_t> skipped_indices;
  bool nan_found = false;
  std::string nan_location;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;

  bool pass(double tol) const { return !nan_found && max_rel_error <= tol; }
};

/// Compares the tape gradient of f at x against central finite differences.
/// f must be pure. Coordinates whose evaluation passes within `kink_tol` of a
/// relu/leaky-relu kink are excluded and reported as skipped. Runs on, and
/// clears, the calling thread's tape.
GradCheckReport gradient_check(const std::function<Tensor(const Tensor&)>& f,
                               Tensor x, double tol, double step = 1e-5,
                               double kink_tol = 1e-7);

// Kink proximity tracking used by gradient_check; armed only during checks.
// Each relu/leaky-relu invocation appends the distance of its nearest input
// to the kink, so a check can tell which activations respond to a perturbed
// coordinate (and whether the op sequence itself changed, e.g. a selection
// flip).
namespace detail {
struct KinkMonitor {
  static void arm();  // clears the trace and starts recording
  static void disarm();
  static bool armed();
  static const std::vector<double>& trace();
  static void observe(double abs_value);
};
}  // namespace detail

}  // namespace gsapool
