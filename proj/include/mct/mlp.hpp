#pragma once

#include "mct/common.hpp"
#include "mct/rng.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mct {

enum class Activation { None, Elu };

// Layer-by-layer description of a multilayer perceptron. layer_dims holds the
// activation sizes: input first, output last. Hidden layers share one
// activation tag; the output layer is always linear. label_concat_at, when
// set, names the hidden activation to which a one-hot label is appended
// before the next linear layer.
struct MlpSpec {
  std::vector<int> layer_dims;
  Activation activation = Activation::Elu;
  std::optional<int> label_concat_at;
  int label_dim = 0;

  int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }

  // Fan-in of layer k, including appended label columns.
  int weight_in_dim(int k) const {
    int in = layer_dims[static_cast<std::size_t>(k)];
    if (label_concat_at && *label_concat_at == k) in += label_dim;
    return in;
  }

  void validate() const {
    if (layer_dims.size() < 2) throw StructuralError("MlpSpec: need at least input and output dims");
    for (int d : layer_dims)
      if (d <= 0) throw StructuralError("MlpSpec: layer dims must be positive");
    if (label_concat_at.has_value() != (label_dim > 0))
      throw StructuralError("MlpSpec: label_dim > 0 iff label_concat_at is set");
    if (label_concat_at) {
      if (*label_concat_at < 1 || *label_concat_at > num_layers() - 1)
        throw StructuralError("MlpSpec: label_concat_at must name a hidden layer before the last");
    }
  }
};

struct MlpParams {
  struct Layer {
    Matrix w;  // out_dim x in_dim
    Vector b;  // out_dim
  };
  std::vector<Layer> layers;

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }
};

// Gradients share the parameter shapes.
using MlpGrads = MlpParams;

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

// Weights uniform over +-sqrt(1/fan_in), biases zero. Fill order is
// row-major per layer so equal seeds give bit-identical parameters.
inline MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng = RngStream(seed).derive("mlp-init");
  MlpParams params;
  params.layers.resize(static_cast<std::size_t>(spec.num_layers()));
  for (int k = 0; k < spec.num_layers(); ++k) {
    const int out = spec.layer_dims[static_cast<std::size_t>(k) + 1];
    const int in = spec.weight_in_dim(k);
    auto& layer = params.layers[static_cast<std::size_t>(k)];
    layer.w.resize(out, in);
    layer.b = Vector::Zero(out);
    const double scale = std::sqrt(1.0 / static_cast<double>(in));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-scale, scale);
  }
  return params;
}

// Extended per-layer inputs (label columns already appended) plus the final
// linear output; exactly what backward() needs.
struct ForwardCache {
  std::vector<Matrix> inputs;
  Matrix output;
  bool had_label = false;
};

namespace detail {

inline void check_forward_args(const MlpSpec& spec, const MlpParams& params, const Matrix& input,
                               const Matrix* labels) {
  if (static_cast<int>(params.layers.size()) != spec.num_layers())
    throw StructuralError("forward: parameter layer count does not match spec");
  if (input.cols() != spec.input_dim())
    throw StructuralError("forward: input dim " + std::to_string(input.cols()) + " != spec dim " +
                          std::to_string(spec.input_dim()));
  if (spec.label_concat_at.has_value() != (labels != nullptr))
    throw StructuralError("forward: label must be present iff spec has label_concat_at");
  if (labels && (labels->rows() != input.rows() || labels->cols() != spec.label_dim))
    throw StructuralError("forward: label batch shape mismatch");
}

}  // namespace detail

// Batch forward pass; rows are samples. Hidden activations use the spec's
// tag, the last layer stays linear, and the one-hot label (when the spec
// asks for one) is appended to the designated hidden activation.
inline Matrix forward(const MlpSpec& spec, const MlpParams& params, const Matrix& input,
                      const Matrix* labels = nullptr, ForwardCache* cache = nullptr) {
  detail::check_forward_args(spec, params, input, labels);
  Matrix act = input;
  if (cache) {
    cache->inputs.clear();
    cache->inputs.reserve(static_cast<std::size_t>(spec.num_layers()));
    cache->had_label = labels != nullptr;
  }
  for (int k = 0; k < spec.num_layers(); ++k) {
    if (spec.label_concat_at && *spec.label_concat_at == k) {
      Matrix ext(act.rows(), act.cols() + spec.label_dim);
      ext.leftCols(act.cols()) = act;
      ext.rightCols(spec.label_dim) = *labels;
      act = std::move(ext);
    }
    if (cache) cache->inputs.push_back(act);
    const auto& layer = params.layers[static_cast<std::size_t>(k)];
    Matrix z = act * layer.w.transpose();
    z.rowwise() += layer.b.transpose();
    const bool last = k == spec.num_layers() - 1;
    if (!last && spec.activation == Activation::Elu)
      z = z.unaryExpr([](double v) { return elu(v); });
    act = std::move(z);
  }
  if (cache) cache->output = act;
  return act;
}

inline Matrix forward(const MlpSpec& spec, const MlpParams& params, const Vector& input,
                      const Vector* label = nullptr) {
  Matrix in = input.transpose();
  if (label) {
    Matrix lab = label->transpose();
    return forward(spec, params, in, &lab);
  }
  return forward(spec, params, in, nullptr);
}

struct BackwardResult {
  MlpGrads grads;
  Matrix input_grad;
};

// Reverse-mode pass over a cached forward. The gradient slot of appended
// label columns is dropped (labels are constants).
inline BackwardResult backward(const MlpSpec& spec, const MlpParams& params,
                               const ForwardCache& cache, const Matrix& output_grad) {
  const int layers = spec.num_layers();
  if (static_cast<int>(cache.inputs.size()) != layers)
    throw StructuralError("backward: cache does not match spec");
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != spec.output_dim())
    throw StructuralError("backward: output gradient shape mismatch");
  if (cache.had_label != spec.label_concat_at.has_value())
    throw StructuralError("backward: cache label presence does not match spec");

  BackwardResult res;
  res.grads.layers.resize(static_cast<std::size_t>(layers));
  Matrix delta = output_grad;  // dL/dz of the current layer
  for (int k = layers - 1; k >= 0; --k) {
    const auto& layer = params.layers[static_cast<std::size_t>(k)];
    const Matrix& in = cache.inputs[static_cast<std::size_t>(k)];
    if (in.cols() != layer.w.cols() || in.rows() != delta.rows())
      throw StructuralError("backward: stale or mismatched cache at layer " + std::to_string(k));
    auto& g = res.grads.layers[static_cast<std::size_t>(k)];
    g.w.noalias() = delta.transpose() * in;
    g.b = delta.colwise().sum().transpose();
    Matrix prev = delta * layer.w;  // gradient w.r.t. the extended input
    if (spec.label_concat_at && *spec.label_concat_at == k)
      prev.conservativeResize(Eigen::NoChange, prev.cols() - spec.label_dim);
    if (k > 0) {
      // chain through the previous layer's activation; post-activation value
      // a gives ELU'(z) = a > 0 ? 1 : a + 1
      const int width = spec.layer_dims[static_cast<std::size_t>(k)];
      if (spec.activation == Activation::Elu) {
        const Matrix& post = cache.inputs[static_cast<std::size_t>(k)];
        prev.array() *= post.leftCols(width).array().unaryExpr(
            [](double a) { return a > 0.0 ? 1.0 : a + 1.0; });
      }
    }
    delta = std::move(prev);
  }
  res.input_grad = std::move(delta);
  return res;
}

}  // namespace mct
