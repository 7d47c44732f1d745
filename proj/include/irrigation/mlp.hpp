#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "irrigation/random.hpp"

namespace irrigation {

// Fully connected network with tanh hidden layers and a linear output layer.
// The shape owns no parameters; callers pass a flat parameter span laid out
// layer by layer as [W (out x in, row-major), b (out)].
class MlpShape {
 public:
  MlpShape() = default;
  explicit MlpShape(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const { return count_; }

  // Post-activation values of every layer, input included.
  struct Tape {
    std::vector<std::vector<double>> activations;
  };

  std::vector<double> forward(std::span<const double> params,
                              std::span<const double> input,
                              Tape* tape = nullptr) const;

  // Adds dL/dparams to `grad` given dL/doutput for the sample in `tape`.
  void backward(std::span<const double> params, const Tape& tape,
                std::span<const double> grad_output,
                std::span<double> grad) const;

  // Uniform fan-in scaled init; the output layer is scaled by `output_gain`.
  void initialize(std::span<double> params, Rng& rng,
                  double output_gain) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::size_t count_ = 0;
};

}  // namespace irrigation
