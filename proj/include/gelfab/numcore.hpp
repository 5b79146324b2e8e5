#pragma once

// Feed-forward encoders with exact backpropagation, the Adam optimizer and a
// central-difference gradient oracle. All arithmetic is double precision.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gelfab {

using Vector = std::vector<double>;

/// Layer widths [F, h1, ..., E]. Hidden layers are rectified, the output
/// layer is affine.
struct EncoderSpec {
  std::vector<std::size_t> layer_dims;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return layer_dims.size() - 1; }

  /// Throws std::invalid_argument unless there are >= 2 dims, all >= 1.
  void validate() const;

  bool operator==(const EncoderSpec&) const = default;
};

// Parameters live in one contiguous buffer; layer l occupies
// [W_l (out x in, row-major), b_l (out)] starting at offset(l).
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(EncoderSpec spec);

  const EncoderSpec& spec() const { return spec_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + spec_.layer_dims[layer] * spec_.layer_dims[layer + 1];
  }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return params_[weight_offset(layer) + row * spec_.layer_dims[layer] + col];
  }
  double weight(std::size_t layer, std::size_t row, std::size_t col) const {
    return params_[weight_offset(layer) + row * spec_.layer_dims[layer] + col];
  }
  double& bias(std::size_t layer, std::size_t row) { return params_[bias_offset(layer) + row]; }
  double bias(std::size_t layer, std::size_t row) const {
    return params_[bias_offset(layer) + row];
  }

  bool operator==(const Encoder&) const = default;

 private:
  EncoderSpec spec_;
  std::vector<std::size_t> offsets_;
  Vector params_;
};

/// Pre- and post-activation values of every layer; activations[0] is the input.
struct ActivationCache {
  std::vector<Vector> pre_activations;
  std::vector<Vector> activations;
};

struct ForwardPass {
  Vector embedding;
  ActivationCache cache;
};

/// Same layout as Encoder::params(), plus the gradient w.r.t. the input.
struct Gradients {
  Vector params;
  Vector input;
};

/// Gaussian weights with std sqrt(2 / fan_in), zero biases.
Encoder encoder_init(const EncoderSpec& spec, std::uint64_t seed);

ForwardPass encoder_forward(const Encoder& enc, std::span<const double> input);

/// Embedding only, without keeping the cache.
Vector encoder_embed(const Encoder& enc, std::span<const double> input);

Gradients encoder_backward(const Encoder& enc, const ActivationCache& cache,
                           std::span<const double> grad_output);

/// Central differences of `loss` over every entry of `point`.
/// Throws NumericError if the loss is non-finite at a probe.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                        std::span<const double> point, double eps);

/// Encoder overload: perturbs each parameter of a copy of `enc`.
Vector finite_diff_grad(const std::function<double(const Encoder&)>& loss, const Encoder& enc,
                        double eps);

/// max |a - b| / max(|a|, |b|, floor) over all entries.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr)
      : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {}
};

/// One bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace gelfab
