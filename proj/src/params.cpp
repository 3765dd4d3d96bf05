#include "gsapool/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gsapool {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_u64(is));
}

constexpr char kMagic[4] = {'G', 'S', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw std::invalid_argument("ParameterSet: duplicate parameter '" + name +
                                "'");
  index_.emplace(name, items_.size());
  items_.emplace_back(name, t);
  return t;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParameterSet: unknown parameter '" + name +
                                "'");
  return items_[it->second].second;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

std::vector<std::vector<double>> ParameterSet::snapshot() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(items_.size());
  for (const auto& [name, t] : items_) snap.push_back(t.values());
  return snap;
}

void ParameterSet::restore(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != items_.size())
    throw std::invalid_argument("ParameterSet::restore: size mismatch");
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].size() != items_[i].second.size())
      throw std::invalid_argument("ParameterSet::restore: shape mismatch");
    items_[i].second.mutable_values() = snap[i];
  }
}

void ParameterSet::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw std::runtime_error("checkpoint: cannot open '" + path +
                             "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  for (const auto& [name, t] : items_) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, 2);
    put_u64(os, t.rows());
    put_u64(os, t.cols());
    for (double v : t.values()) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ParameterSet ParameterSet::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  ParameterSet ps;
  while (true) {
    if (is.peek() == std::char_traits<char>::eof()) break;
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint: truncated name");
    const std::uint32_t ndim = get_u32(is);
    if (ndim != 2)
      throw std::runtime_error("checkpoint: unsupported rank " +
                               std::to_string(ndim));
    const std::uint64_t rows = get_u64(is);
    const std::uint64_t cols = get_u64(is);
    std::vector<double> vals(rows * cols);
    for (auto& v : vals) v = get_f64(is);
    ps.add(name, Tensor(rows, cols, std::move(vals), /*requires_grad=*/true));
  }
  return ps;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& [name, t] : items_) {
    const Tensor& src = other.get(name);
    if (src.size() != t.size())
      throw std::invalid_argument("copy_values_from: shape mismatch for '" +
                                  name + "'");
    t.mutable_values() = src.values();
  }
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps,
                             double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {}

void AdamOptimizer::reset() {
  t_ = 0;
  state_.clear();
}

void AdamOptimizer::step(ParameterSet& params) {
  if (state_.size() != params.size()) state_.resize(params.size());
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    if (!t.has_grad())
      throw std::runtime_error("adam: missing gradient for parameter '" +
                               name + "'");
    Moments& mo = state_[i++];
    if (mo.m.size() != t.size()) {
      mo.m.assign(t.size(), 0.0);
      mo.v.assign(t.size(), 0.0);
    }
    const auto& g = t.grad();
    auto& w = t.mutable_values();
    for (std::size_t e = 0; e < w.size(); ++e) {
      const double grad = g[e] + weight_decay_ * w[e];
      mo.m[e] = beta1_ * mo.m[e] + (1.0 - beta1_) * grad;
      mo.v[e] = beta2_ * mo.v[e] + (1.0 - beta2_) * grad * grad;
      const double mhat = mo.m[e] / bc1;
      const double vhat = mo.v[e] / bc2;
      w[e] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace gsapool
