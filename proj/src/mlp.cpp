#include "irrigation/mlp.hpp"

#include <cmath>

#include "irrigation/error.hpp"

namespace irrigation {

MlpShape::MlpShape(std::vector<std::size_t> layer_sizes)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw Error("mlp: need at least input and output");
  for (auto s : sizes_) {
    if (s == 0) throw Error("mlp: layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(count_);
    count_ += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
}

std::vector<double> MlpShape::forward(std::span<const double> params,
                                      std::span<const double> input,
                                      Tape* tape) const {
  if (input.size() != input_size()) {
    throw Error("mlp: input dimension " + std::to_string(input.size()) +
                ", expected " + std::to_string(input_size()));
  }
  if (params.size() < count_) throw Error("mlp: parameter span too short");
  std::vector<double> x(input.begin(), input.end());
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(x);
  }
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    const double* b = w + in * out;
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = l + 1 < layers ? std::tanh(acc) : acc;
    }
    x = std::move(y);
    if (tape) tape->activations.push_back(x);
  }
  return x;
}

void MlpShape::backward(std::span<const double> params, const Tape& tape,
                        std::span<const double> grad_output,
                        std::span<double> grad) const {
  const std::size_t layers = sizes_.size() - 1;
  if (tape.activations.size() != layers + 1) {
    throw Error("mlp: tape does not match network depth");
  }
  if (grad_output.size() != output_size() || grad.size() < count_) {
    throw Error("mlp: gradient dimension mismatch");
  }
  // delta holds dL/d(pre-activation) of layer l + 1.
  std::vector<double> delta(grad_output.begin(), grad_output.end());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + in * out;
    const auto& x = tape.activations[l];
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      double* grow = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
      gb[o] += d;
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    // Hidden layers use tanh: d tanh = 1 - y^2.
    for (std::size_t i = 0; i < in; ++i) {
      const double y = x[i];
      prev[i] *= 1.0 - y * y;
    }
    delta = std::move(prev);
  }
}

void MlpShape::initialize(std::span<double> params, Rng& rng,
                          double output_gain) const {
  if (params.size() < count_) throw Error("mlp: parameter span too short");
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double bound =
        (l + 1 < layers ? 1.0 : output_gain) / std::sqrt(double(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* w = params.data() + offsets_[l];
    for (std::size_t k = 0; k < in * out; ++k) w[k] = dist(rng);
    for (std::size_t k = 0; k < out; ++k) w[in * out + k] = 0.0;
  }
}

}  // namespace irrigation
