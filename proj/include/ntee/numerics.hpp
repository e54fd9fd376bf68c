// Numeric building blocks: dense vectors and matrices, a deterministic RNG,
// the RMSprop optimizer and a central-difference gradient oracle.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ntee {

using Vec = std::vector<double>;

/// Row-major dense matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// m * x
inline Vec matvec(const Mat& m, std::span<const double> x) {
  if (x.size() != m.cols()) throw std::invalid_argument("matvec: dimension mismatch");
  Vec out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
  return out;
}

/// m^T * y
inline Vec matvec_transposed(const Mat& m, std::span<const double> y) {
  if (y.size() != m.rows()) throw std::invalid_argument("matvec_transposed: dimension mismatch");
  Vec out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(y[r], m.row(r), out);
  return out;
}

/// m += alpha * a b^T
inline void add_outer(double alpha, std::span<const double> a, std::span<const double> b, Mat& m) {
  if (a.size() != m.rows() || b.size() != m.cols())
    throw std::invalid_argument("add_outer: dimension mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(alpha * a[r], b, m.row(r));
}

/// Cosine similarity; 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Counter-based generator: output i is splitmix64(key + i * golden).
/// The same seed, stream and call sequence give the same output on every
/// platform; no std:: distributions are involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Independent generator derived from this one's seed.
  Rng split(std::uint64_t stream) const { return Rng(key_, stream); }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Entries i.i.d. uniform in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
inline Mat glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("glorot_init: zero dimension");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(-bound, bound);
  return m;
}

struct RmspropConfig {
  double learning_rate = 0.01;
  double decay = 0.9;
  double epsilon = 1e-6;
};

/// Running mean of squared gradients for one parameter tensor.
struct RmspropState {
  RmspropConfig config;
  Vec accum;

  RmspropState() = default;
  RmspropState(std::size_t size, RmspropConfig cfg) : config(cfg), accum(size, 0.0) {
    if (!(cfg.decay > 0.0 && cfg.decay < 1.0)) throw std::invalid_argument("rmsprop: decay must be in (0,1)");
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("rmsprop: epsilon must be positive");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("rmsprop: learning rate must be positive");
  }
};

/// One RMSprop step on a contiguous slice. `accum` is the matching slice of
/// the state; used directly for sparse row updates of embedding tables.
inline void rmsprop_update_slice(std::span<double> param, std::span<const double> grad,
                                 std::span<double> accum, const RmspropConfig& cfg,
                                 std::string_view name) {
  if (param.size() != grad.size() || param.size() != accum.size())
    throw std::invalid_argument("rmsprop_update: shape mismatch for " + std::string(name));
  if (!all_finite(grad))
    throw std::domain_error("rmsprop_update: non-finite gradient for " + std::string(name));
  for (std::size_t i = 0; i < param.size(); ++i) {
    accum[i] = cfg.decay * accum[i] + (1.0 - cfg.decay) * grad[i] * grad[i];
    param[i] -= cfg.learning_rate * grad[i] / std::sqrt(accum[i] + cfg.epsilon);
  }
}

inline void rmsprop_update(std::span<double> param, std::span<const double> grad, RmspropState& state,
                           std::string_view name = "parameter") {
  if (state.accum.size() != param.size())
    throw std::invalid_argument("rmsprop_update: state not initialized for " + std::string(name));
  rmsprop_update_slice(param, grad, state.accum, state.config, name);
}

inline void rmsprop_update(Mat& param, const Mat& grad, RmspropState& state,
                           std::string_view name = "parameter") {
  if (param.rows() != grad.rows() || param.cols() != grad.cols())
    throw std::invalid_argument("rmsprop_update: shape mismatch for " + std::string(name));
  rmsprop_update(param.values(), grad.values(), state, name);
}

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
inline Vec finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> at, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Vec x(at.begin(), at.end());
  Vec g(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("finite_diff_grad: non-finite function value at coordinate " +
                              std::to_string(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Max element-wise relative error |a-n| / max(|a|, |n|, floor).
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-5) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Softmax with max-subtraction.
inline Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (double& x : p) x /= z;
  return p;
}

/// log-sum-exp with max-subtraction.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = *std::max_element(xs.begin(), xs.end());
  double z = 0.0;
  for (double x : xs) z += std::exp(x - m);
  return m + std::log(z);
}

}  // namespace ntee
