#include "gelfab/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gelfab/errors.hpp"
#include "gelfab/rng.hpp"

namespace gelfab {

void EncoderSpec::validate() const {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("encoder spec needs at least input and output dims");
  }
  for (auto d : layer_dims) {
    if (d < 1) throw std::invalid_argument("encoder layer dims must be >= 1");
  }
}

Encoder::Encoder(EncoderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t total = 0;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    offsets_.push_back(total);
    total += spec_.layer_dims[l + 1] * (spec_.layer_dims[l] + 1);
  }
  params_.assign(total, 0.0);
}

Encoder encoder_init(const EncoderSpec& spec, std::uint64_t seed) {
  Encoder enc(spec);
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_dims[l];
    const std::size_t out = spec.layer_dims[l + 1];
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) enc.weight(l, r, c) = rng.normal(0.0, stddev);
  }
  return enc;
}

namespace {

void affine(const Encoder& enc, std::size_t l, std::span<const double> in, Vector& out) {
  const std::size_t n_in = enc.spec().layer_dims[l];
  const std::size_t n_out = enc.spec().layer_dims[l + 1];
  out.assign(n_out, 0.0);
  const double* w = enc.params().data() + enc.weight_offset(l);
  const double* b = enc.params().data() + enc.bias_offset(l);
  for (std::size_t r = 0; r < n_out; ++r) {
    double acc = b[r];
    const double* row = w + r * n_in;
    for (std::size_t c = 0; c < n_in; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

void check_input(const Encoder& enc, std::size_t n) {
  if (n != enc.spec().input_dim()) {
    throw std::invalid_argument("encoder input has " + std::to_string(n) + " values, expected " +
                                std::to_string(enc.spec().input_dim()));
  }
}

}  // namespace

ForwardPass encoder_forward(const Encoder& enc, std::span<const double> input) {
  check_input(enc, input.size());
  const std::size_t layers = enc.spec().layer_count();
  ForwardPass fp;
  fp.cache.activations.reserve(layers + 1);
  fp.cache.pre_activations.reserve(layers);
  fp.cache.activations.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    Vector z;
    affine(enc, l, fp.cache.activations.back(), z);
    Vector a = z;
    if (l + 1 < layers) {
      for (auto& v : a) v = v > 0.0 ? v : 0.0;
    }
    fp.cache.pre_activations.push_back(std::move(z));
    fp.cache.activations.push_back(std::move(a));
  }
  fp.embedding = fp.cache.activations.back();
  return fp;
}

Vector encoder_embed(const Encoder& enc, std::span<const double> input) {
  check_input(enc, input.size());
  const std::size_t layers = enc.spec().layer_count();
  Vector cur(input.begin(), input.end());
  Vector next;
  for (std::size_t l = 0; l < layers; ++l) {
    affine(enc, l, cur, next);
    if (l + 1 < layers) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    }
    std::swap(cur, next);
  }
  return cur;
}

Gradients encoder_backward(const Encoder& enc, const ActivationCache& cache,
                           std::span<const double> grad_output) {
  const auto& dims = enc.spec().layer_dims;
  const std::size_t layers = enc.spec().layer_count();
  if (cache.activations.size() != layers + 1 || cache.pre_activations.size() != layers) {
    throw std::invalid_argument("activation cache does not match encoder depth");
  }
  for (std::size_t l = 0; l <= layers; ++l) {
    if (cache.activations[l].size() != dims[l]) {
      throw std::invalid_argument("activation cache does not match encoder layer widths");
    }
  }
  if (grad_output.size() != enc.spec().output_dim()) {
    throw std::invalid_argument("gradient length does not match encoder output dim");
  }

  Gradients g;
  g.params.assign(enc.parameter_count(), 0.0);
  Vector delta(grad_output.begin(), grad_output.end());
  for (std::size_t li = layers; li-- > 0;) {
    const std::size_t n_in = dims[li];
    const std::size_t n_out = dims[li + 1];
    if (li + 1 < layers) {
      const auto& z = cache.pre_activations[li];
      for (std::size_t r = 0; r < n_out; ++r)
        if (!(z[r] > 0.0)) delta[r] = 0.0;
    }
    const auto& in = cache.activations[li];
    double* gw = g.params.data() + enc.weight_offset(li);
    double* gb = g.params.data() + enc.bias_offset(li);
    const double* w = enc.params().data() + enc.weight_offset(li);
    Vector prev(n_in, 0.0);
    for (std::size_t r = 0; r < n_out; ++r) {
      const double d = delta[r];
      gb[r] = d;
      if (d == 0.0) continue;
      double* grow = gw + r * n_in;
      const double* wrow = w + r * n_in;
      for (std::size_t c = 0; c < n_in; ++c) {
        grow[c] = d * in[c];
        prev[c] += d * wrow[c];
      }
    }
    delta = std::move(prev);
  }
  g.input = std::move(delta);
  return g;
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                        std::span<const double> point, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  Vector x(point.begin(), point.end());
  Vector grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = loss(x);
    x[i] = saved - eps;
    const double down = loss(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite loss while probing parameter " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Vector finite_diff_grad(const std::function<double(const Encoder&)>& loss, const Encoder& enc,
                        double eps) {
  Encoder probe = enc;
  return finite_diff_grad(
      [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), probe.params().begin());
        return loss(probe);
      },
      enc.params(), eps);
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("relative error of unequal lengths");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw std::invalid_argument("adam: parameter, gradient and state sizes differ");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[i] / c1;
    const double v_hat = state.second_moment[i] / c2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace gelfab
