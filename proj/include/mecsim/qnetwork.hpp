#pragma once

// Small fully connected Q-network with rectified-linear hidden layers and a
// linear output layer. Parameters live in one flat vector (per layer: W
// row-major [out x in], then b), which keeps syncing, plain gradient steps
// and checkpointing trivial.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mecsim/rng.hpp"

namespace mecsim {

class QNetwork {
 public:
  QNetwork() = default;

  /// `layer_sizes` = {input, hidden..., output}. Weights and biases are drawn
  /// uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  QNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("QNetwork: need at least input and output layers");
    for (auto s : sizes_)
      if (s == 0) throw std::invalid_argument("QNetwork: zero-width layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(total);
      total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
    params_.resize(total);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      const std::size_t count = sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
      for (std::size_t i = 0; i < count; ++i) params_[offsets_[l] + i] = rng.uniform(-bound, bound);
    }
  }

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const {
    std::vector<std::vector<double>> acts;
    forward_all(x, acts);
    return std::move(acts.back());
  }

  /// Adds `dout * d q[action] / d params` into `grad`.
  void accumulate_gradient(std::span<const double> x, std::size_t action, double dout, std::span<double> grad) const {
    std::vector<std::vector<double>> acts;
    forward_all(x, acts);
    backward(acts, action, dout, grad);
  }

  /// Forward pass that keeps every layer's output (acts[0] is the input).
  void forward_all(std::span<const double> x, std::vector<std::vector<double>>& acts) const {
    if (x.size() != input_dim()) throw std::invalid_argument("QNetwork: input dimension mismatch");
    acts.resize(sizes_.size());
    acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* W = params_.data() + offsets_[l];
      const double* b = W + out * in;
      auto& y = acts[l + 1];
      y.assign(out, 0.0);
      const auto& a = acts[l];
      const bool hidden = l + 2 < sizes_.size();
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
        y[o] = hidden ? std::max(s, 0.0) : s;
      }
    }
  }

  void backward(const std::vector<std::vector<double>>& acts, std::size_t action, double dout,
                std::span<double> grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("QNetwork: gradient size mismatch");
    if (action >= output_dim()) throw std::out_of_range("QNetwork: action index out of range");
    // delta holds dL/d(pre-activation) of the current layer.
    std::vector<double> delta(output_dim(), 0.0);
    delta[action] = dout;
    for (std::size_t l = num_layers(); l-- > 0;) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* W = params_.data() + offsets_[l];
      double* gW = grad.data() + offsets_[l];
      double* gb = gW + out * in;
      const auto& a = acts[l];
      std::vector<double> prev(l > 0 ? in : 0, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        const double* row = W + o * in;
        double* grow = gW + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
        if (l > 0)
          for (std::size_t i = 0; i < in; ++i) prev[i] += d * row[i];
      }
      if (l > 0) {
        for (std::size_t i = 0; i < in; ++i)
          if (a[i] <= 0.0) prev[i] = 0.0;  // ReLU: a == max(z, 0)
        delta = std::move(prev);
      }
    }
  }

  void copy_weights_from(const QNetwork& other) {
    if (other.sizes_ != sizes_) throw std::invalid_argument("QNetwork: shape mismatch on sync");
    params_ = other.params_;
  }

  friend bool operator==(const QNetwork&, const QNetwork&) = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace mecsim
