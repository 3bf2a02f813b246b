#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mz/rng.hpp"

namespace mz::net {

using Vec = std::vector<double>;

// All trainable tensors live in one flat buffer so that optimizer state,
// checkpoints and gradient buffers are plain arrays. Layers hold offsets.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    size_t offset;
    size_t size;
  };

  size_t allocate(const std::string& name, size_t size) {
    const size_t offset = values_.size();
    entries_.push_back({name, offset, size});
    values_.resize(offset + size, 0.0);
    return offset;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return values_.size(); }
  Vec& values() { return values_; }
  const Vec& values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

 private:
  std::vector<Entry> entries_;
  Vec values_;
};

inline void relu(const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

inline void relu_backward(const double* x, const double* gy, double* gx, size_t n) {
  for (size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

// 3x3 convolution over the 3x3 board with zero padding 1, stride 1.
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(ParamRegistry& reg, const std::string& name, int in_c, int out_c)
      : in_c_(in_c), out_c_(out_c) {
    w_off_ = reg.allocate(name + ".weight", static_cast<size_t>(out_c) * in_c * 9);
    b_off_ = reg.allocate(name + ".bias", out_c);
  }

  void init(double* params, Rng& rng) const {
    const double std = std::sqrt(2.0 / (in_c_ * 9));
    double* w = params + w_off_;
    for (size_t i = 0; i < static_cast<size_t>(out_c_) * in_c_ * 9; ++i) w[i] = std * rng.normal();
    // small positive bias: keeps units off the relu kink at initialization
    for (int i = 0; i < out_c_; ++i) params[b_off_ + i] = 0.01;
  }

  // x: in_c*9, y: out_c*9 (single sample)
  void forward(const double* params, const double* x, double* y) const;
  void backward(const double* params, const double* x, const double* gy, double* gx,
                double* grads) const;

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

 private:
  int in_c_ = 0, out_c_ = 0;
  size_t w_off_ = 0, b_off_ = 0;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in, int out) : in_(in), out_(out) {
    w_off_ = reg.allocate(name + ".weight", static_cast<size_t>(out) * in);
    b_off_ = reg.allocate(name + ".bias", out);
  }

  void init(double* params, Rng& rng) const {
    const double std = std::sqrt(2.0 / in_);
    double* w = params + w_off_;
    for (size_t i = 0; i < static_cast<size_t>(out_) * in_; ++i) w[i] = std * rng.normal();
    for (int i = 0; i < out_; ++i) params[b_off_ + i] = 0.01;
  }

  void forward(const double* params, const double* x, double* y) const {
    const double* w = params + w_off_;
    const double* b = params + b_off_;
    for (int o = 0; o < out_; ++o) {
      double acc = b[o];
      const double* row = w + static_cast<size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  void backward(const double* params, const double* x, const double* gy, double* gx,
                double* grads) const {
    const double* w = params + w_off_;
    double* gw = grads + w_off_;
    double* gb = grads + b_off_;
    if (gx) {
      for (int i = 0; i < in_; ++i) gx[i] = 0.0;
    }
    for (int o = 0; o < out_; ++o) {
      const double g = gy[o];
      const double* row = w + static_cast<size_t>(o) * in_;
      double* grow = gw + static_cast<size_t>(o) * in_;
      gb[o] += g;
      for (int i = 0; i < in_; ++i) grow[i] += g * x[i];
      if (gx) {
        for (int i = 0; i < in_; ++i) gx[i] += row[i] * g;
      }
    }
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_ = 0, out_ = 0;
  size_t w_off_ = 0, b_off_ = 0;
};

inline void softmax(const double* logits, double* probs, size_t n) {
  double max = logits[0];
  for (size_t i = 1; i < n; ++i) max = std::max(max, logits[i]);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - max);
    sum += probs[i];
  }
  for (size_t i = 0; i < n; ++i) probs[i] /= sum;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> probs(logits.size());
  softmax(logits.data(), probs.data(), logits.size());
  return probs;
}

}  // namespace mz::net
