#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gsapool/params.hpp"
#include "gsapool/rng.hpp"
#include "gsapool/tensor.hpp"

using namespace gsapool;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng,
                     bool requires_grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(r, c, std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul against identity returns the input") {
  Tensor a(2, 2, {1, 2, 3, 4});
  Tensor out = matmul(a, Tensor::identity(2));
  CHECK(out.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul shape mismatch names the op and shapes") {
  Tensor a(2, 3, std::vector<double>(6, 0.0));
  Tensor b(4, 5, std::vector<double>(20, 0.0));
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: incompatible shapes 2x3 and 4x5",
                       std::invalid_argument);
}

TEST_CASE("segment softmax over equal logits is uniform") {
  Tensor x(2, 1, {0.0, 0.0});
  Tensor y = segment_softmax(x, {0, 0});
  CHECK(y.at(0, 0) == doctest::Approx(0.5));
  CHECK(y.at(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("tanh backward at zero has unit gradient") {
  Tensor x = Tensor::scalar(0.0, true);
  Tensor y = gsapool::tanh(x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  Tape::active().clear();
}

TEST_CASE("grad of sum(W x) with respect to W broadcasts x") {
  Tensor w(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, true);
  Tensor x = Tensor::column({1.0, 2.0, 3.0});
  Tensor loss = sum_all(matmul(w, x));
  backward(loss);
  const auto& g = w.grad();
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(g[i * 3 + 0] == doctest::Approx(1.0));
    CHECK(g[i * 3 + 1] == doctest::Approx(2.0));
    CHECK(g[i * 3 + 2] == doctest::Approx(3.0));
  }
  Tape::active().clear();
}

TEST_CASE("sigmoid gradient at zero is a quarter of the scale") {
  const double c = 3.0;
  Tensor x = Tensor::scalar(0.0, true);
  Tensor loss = scalar_mul(sigmoid(x), c);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(0.25 * c));
  Tape::active().clear();
}

TEST_CASE("random composite graph passes the finite-difference check") {
  Rng rng(42);
  Tensor w1 = random_tensor(3, 3, rng, true);
  Tensor w2 = random_tensor(3, 2, rng, true);
  Tensor b = random_tensor(1, 2, rng, true);
  auto f = [&](const Tensor& x) {
    // five recorded ops: matmul, tanh, matmul, add_rowvec, sum_all
    Tensor h = gsapool::tanh(matmul(x, w1));
    return sum_all(add_rowvec(matmul(h, w2), b));
  };
  Tensor x = random_tensor(4, 3, rng, true);
  auto report = gradient_check(f, x, 1e-6);
  CHECK(report.passed);
  CHECK(report.checked == 12);
}

TEST_CASE("gradient_check on sum is exact") {
  Tensor x(2, 3, {1, 2, 3, 4, 5, 6}, true);
  // a power-of-two step keeps the linear finite difference exact
  auto report = gradient_check([](const Tensor& t) { return sum_all(t); }, x,
                               1e-12, /*step=*/0x1.0p-16);
  CHECK(report.passed);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("gradient_check on sum(tanh(Wx)) stays under 1e-6") {
  Rng rng(7);
  Tensor w = random_tensor(3, 3, rng, true);
  Tensor x = random_tensor(3, 3, rng);
  auto f = [&](const Tensor& t) { return sum_all(gsapool::tanh(matmul(t, x))); };
  auto report = gradient_check(f, w, 1e-6);
  CHECK(report.passed);
  CHECK(report.max_rel_error <= 1e-6);
}

TEST_CASE("gradient_check flags relu evaluated exactly at the kink") {
  Tensor x(1, 2, {0.0, 1.0}, true);
  auto f = [](const Tensor& t) { return sum_all(relu(t)); };
  auto report = gradient_check(f, x, 1e-6, 1e-5, /*kink_tol=*/1e-7);
  CHECK(report.skipped >= 1);
  CHECK(std::find(report.skipped_indices.begin(), report.skipped_indices.end(),
                  std::size_t{0}) != report.skipped_indices.end());
}

TEST_CASE("relu backward uses subgradient zero at exactly zero") {
  Tensor x(1, 3, {-1.0, 0.0, 2.0}, true);
  backward(sum_all(relu(x)));
  CHECK(x.grad() == std::vector<double>{0.0, 0.0, 1.0});
  Tape::active().clear();
}

TEST_CASE("segment softmax sums to one and its Jacobian rows sum to zero") {
  Rng rng(11);
  std::vector<int> seg = {0, 0, 0, 1, 1, 3, 3, 3, 3};
  Tensor x = random_tensor(seg.size(), 1, rng, true);

  Tensor y = segment_softmax(x, seg);
  for (int s : {0, 1, 3}) {
    double total = 0.0;
    for (std::size_t i = 0; i < seg.size(); ++i)
      if (seg[i] == s) total += y.at(i, 0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tape::active().clear();

  // Numeric Jacobian: row sums vanish (outputs are shift-invariant in their
  // segment's inputs) and column sums vanish (each segment stays normalized).
  const double h = 1e-6;
  auto eval = [&](const Tensor& t) {
    NoGradGuard ng;
    return segment_softmax(t, seg).values();
  };
  const std::size_t n = seg.size();
  std::vector<std::vector<double>> jac(n, std::vector<double>(n, 0.0));
  auto& vals = x.mutable_values();
  for (std::size_t j = 0; j < n; ++j) {
    const double v = vals[j];
    vals[j] = v + h;
    auto yp = eval(x);
    vals[j] = v - h;
    auto ym = eval(x);
    vals[j] = v;
    for (std::size_t i = 0; i < n; ++i) jac[i][j] = (yp[i] - ym[i]) / (2 * h);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0, col_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row_sum += jac[i][j];
      col_sum += jac[j][i];
    }
    CHECK(std::abs(row_sum) < 1e-8);
    CHECK(std::abs(col_sum) < 1e-8);
  }
}

TEST_CASE("repeated forward and backward is bit-identical") {
  Rng rng(3);
  Tensor w = random_tensor(4, 4, rng, true);
  Tensor x = random_tensor(4, 4, rng);
  auto run = [&]() {
    Tape::active().clear();
    w.zero_grad();
    Tensor loss = sum_all(sigmoid(matmul(x, w)));
    backward(loss);
    auto g = w.grad();
    Tape::active().clear();
    return g;
  };
  auto g1 = run();
  auto g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("gradients accumulate until zeroed") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor loss = scalar_mul(x, 3.0);
  backward(loss);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  x.zero_grad();
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  Tape::active().clear();
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x(2, 1, {1.0, 2.0}, true);
  Tensor y = scalar_mul(x, 2.0);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
  Tape::active().clear();
}

TEST_CASE("no-grad evaluation records nothing") {
  Tape::active().clear();
  Tensor x = Tensor::scalar(1.0, true);
  {
    NoGradGuard ng;
    Tensor y = gsapool::tanh(scalar_mul(x, 2.0));
    CHECK(!y.requires_grad());
  }
  CHECK(Tape::active().size() == 0);
}

TEST_CASE("max_rows breaks ties toward the first row") {
  Tensor x(3, 2, {1.0, 5.0, 1.0, 2.0, 0.0, 5.0}, true);
  backward(sum_all(max_rows(x)));
  // column 0 max at row 0 (tie with row 1), column 1 max at row 0 (tie, row 2)
  CHECK(x.grad() == std::vector<double>{1.0, 1.0, 0.0, 0.0, 0.0, 0.0});
  Tape::active().clear();
}

TEST_CASE("log_softmax rows exponentiate to a distribution") {
  Rng rng(5);
  Tensor x = random_tensor(3, 4, rng);
  Tensor y = log_softmax_rows(x);
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(y.at(i, j));
    CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gather and concat round out the op set") {
  Tensor x(3, 2, {1, 2, 3, 4, 5, 6}, true);
  Tensor g = gather_rows(x, {2, 0});
  CHECK(g.values() == std::vector<double>{5, 6, 1, 2});
  CHECK_THROWS_AS(gather_rows(x, {3}), std::invalid_argument);

  Tensor c = concat_cols(g, Tensor(2, 1, {9, 9}));
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 3);
  CHECK(c.at(0, 2) == 9);
  Tape::active().clear();
}

TEST_CASE("segment ids must be nondecreasing") {
  Tensor x(3, 1, {1, 2, 3});
  CHECK_THROWS_AS(segment_softmax(x, {1, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(segment_sum(x, {0, 2, 1}, 3), std::invalid_argument);
}

// ---- Adam -------------------------------------------------------------------

TEST_CASE("adam leaves parameters unchanged when gradients are zero") {
  ParameterSet ps;
  Tensor w = ps.add("w", Tensor(2, 2, {1, 2, 3, 4}, true));
  ps.zero_grad();
  AdamOptimizer opt(0.1);
  opt.step(ps);
  CHECK(w.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("adam first step moves by roughly the learning rate") {
  ParameterSet ps;
  Tensor w = ps.add("w", Tensor::scalar(0.0, true));
  Tensor loss = scalar_mul(w, 1.0);
  backward(loss);
  AdamOptimizer opt(0.05);
  opt.step(ps);
  // bias-corrected first step: lr * g / (|g| + eps)
  CHECK(std::abs(w.values()[0] + 0.05) < 1e-6);
  Tape::active().clear();
}

TEST_CASE("adam descends a quadratic") {
  ParameterSet ps;
  Tensor w = ps.add("w", Tensor::scalar(1.0, true));
  AdamOptimizer opt(0.1);
  double prev = 1.0;
  for (int i = 0; i < 10; ++i) {
    ps.zero_grad();
    Tape::active().clear();
    Tensor loss = mul(w, w);
    backward(loss);
    opt.step(ps);
    CHECK(std::abs(w.values()[0]) < std::abs(prev));
    prev = w.values()[0];
  }
  Tape::active().clear();
}

TEST_CASE("adam names the parameter that is missing a gradient") {
  ParameterSet ps;
  ps.add("first", Tensor::scalar(0.0, true));
  AdamOptimizer opt(0.1);
  CHECK_THROWS_WITH_AS(opt.step(ps),
                       "adam: missing gradient for parameter 'first'",
                       std::runtime_error);
}

// ---- ParameterSet / checkpoints ----------------------------------------------

TEST_CASE("parameter names must be unique and lookups work") {
  ParameterSet ps;
  ps.add("a", Tensor::scalar(1.0, true));
  CHECK_THROWS_AS(ps.add("a", Tensor::scalar(2.0, true)),
                  std::invalid_argument);
  CHECK(ps.get("a").item() == 1.0);
  CHECK_THROWS_AS(ps.get("b"), std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves names, shapes and values") {
  Rng rng(13);
  ParameterSet ps;
  ps.add("layer.weight", random_tensor(3, 4, rng, true));
  ps.add("layer.bias", random_tensor(1, 4, rng, true));

  auto path = std::filesystem::temp_directory_path() / "gsapool_ckpt_test.bin";
  ps.save_checkpoint(path.string());
  ParameterSet loaded = ParameterSet::load_checkpoint(path.string());

  CHECK(loaded.size() == 2);
  CHECK(loaded.get("layer.weight").rows() == 3);
  CHECK(loaded.get("layer.weight").cols() == 4);
  CHECK(loaded.get("layer.weight").values() == ps.get("layer.weight").values());
  CHECK(loaded.get("layer.bias").values() == ps.get("layer.bias").values());
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint byte layout is pinned") {
  ParameterSet ps;
  ps.add("w", Tensor(1, 1, {1.0}, true));
  auto path = std::filesystem::temp_directory_path() / "gsapool_ckpt_fmt.bin";
  ps.save_checkpoint(path.string());

  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  std::filesystem::remove(path);

  // magic, version, name length, "w", ndim, 1, 1, f64(1.0)
  const std::vector<unsigned char> expect = {
      'G', 'S', 'A', 'P',
      1, 0, 0, 0,
      1, 0, 0, 0,
      'w',
      2, 0, 0, 0,
      1, 0, 0, 0, 0, 0, 0, 0,
      1, 0, 0, 0, 0, 0, 0, 0,
      0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
  CHECK(bytes == expect);
}

TEST_CASE("checkpoint loader rejects corrupt headers") {
  auto path = std::filesystem::temp_directory_path() / "gsapool_ckpt_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os.write("NOPE", 4);
  }
  CHECK_THROWS_AS(ParameterSet::load_checkpoint(path.string()),
                  std::runtime_error);
  std::filesystem::remove(path);
}
