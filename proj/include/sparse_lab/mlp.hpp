#pragma once

#include "sparse_lab/params.hpp"
#include "sparse_lab/rng.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparse_lab {

/// Dense feed-forward network: ReLU between hidden layers, identity output.
struct MlpArchitecture {
  std::vector<Index> layer_sizes;

  void validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("architecture needs at least 2 layer sizes");
    for (Index s : layer_sizes)
      if (s < 1) throw std::invalid_argument("layer sizes must be >= 1");
  }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  Index input_dim() const { return layer_sizes.front(); }
  Index num_classes() const { return layer_sizes.back(); }

  /// "784-300-100-10"
  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
      if (i) s += '-';
      s += std::to_string(layer_sizes[i]);
    }
    return s;
  }

  /// Accepts "784-300-100-10" or "784,300,100,10".
  static MlpArchitecture parse(const std::string& text) {
    MlpArchitecture arch;
    std::string token;
    std::istringstream in(text);
    const char sep = text.find(',') != std::string::npos ? ',' : '-';
    while (std::getline(in, token, sep)) {
      if (token.empty()) throw std::invalid_argument("bad architecture: " + text);
      std::size_t used = 0;
      long long v = std::stoll(token, &used);
      if (used != token.size()) throw std::invalid_argument("bad architecture: " + text);
      arch.layer_sizes.push_back(static_cast<Index>(v));
    }
    arch.validate();
    return arch;
  }

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

inline std::string weight_name(std::size_t layer) { return "fc" + std::to_string(layer + 1) + ".weight"; }
inline std::string bias_name(std::size_t layer) { return "fc" + std::to_string(layer + 1) + ".bias"; }

/// Weights uniform in [-b, b] with b = sqrt(1 / fan_in), biases zero.
template <typename Scalar = double>
BasicParamSet<Scalar> init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  BasicParamSet<Scalar> params;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const Index fan_in = arch.layer_sizes[l];
    const Index fan_out = arch.layer_sizes[l + 1];
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Matrix<Scalar> w(fan_out, fan_in);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(uniform(rng, -bound, bound));
    params.add(weight_name(l), std::move(w), true, 2);
    params.add(bias_name(l), Matrix<Scalar>::Zero(1, fan_out), false, 1);
  }
  return params;
}

namespace detail {

template <typename Scalar>
struct DenseLayerView {
  const Matrix<Scalar>* weight;
  const Matrix<Scalar>* bias;
  const Matrix<Scalar>* keep;  // null when unmasked
};

/// Validates the fcN.weight / fcN.bias layout and pairs each layer with its mask.
template <typename Scalar>
std::vector<DenseLayerView<Scalar>> dense_layers(const BasicParamSet<Scalar>& params,
                                                 const BasicMask<Scalar>* mask) {
  if (mask != nullptr) check_congruent(params, *mask);
  if (params.size() == 0 || params.size() % 2 != 0)
    throw std::invalid_argument("parameter set is not a dense layer stack");
  std::vector<DenseLayerView<Scalar>> layers;
  for (std::size_t l = 0; l < params.size() / 2; ++l) {
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    if (w.name != weight_name(l) || b.name != bias_name(l) || w.rank != 2 || b.rank != 1)
      throw std::invalid_argument("unexpected parameter layout at layer " + std::to_string(l + 1));
    if (b.value.cols() != w.value.rows())
      throw std::invalid_argument("bias size mismatch at layer " + w.name);
    if (l > 0 && w.value.cols() != params[2 * l - 2].value.rows())
      throw std::invalid_argument("shape mismatch between layers at " + w.name);
    layers.push_back({&w.value, &b.value, mask ? mask->find(w.name) : nullptr});
  }
  return layers;
}

template <typename Scalar>
Matrix<Scalar> effective_weight(const DenseLayerView<Scalar>& layer) {
  if (layer.keep == nullptr) return *layer.weight;
  return layer.weight->cwiseProduct(*layer.keep);
}

}  // namespace detail

/// Pre-activations and activations of every layer for one batch.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Matrix<Scalar>> inputs;   // input to layer l (activation of l-1)
  std::vector<Matrix<Scalar>> weights;  // effective (masked) weights used
  Matrix<Scalar> logits;
};

template <typename Scalar>
ForwardTrace<Scalar> forward_trace(const BasicParamSet<Scalar>& params, const BasicMask<Scalar>* mask,
                                   const Matrix<Scalar>& batch) {
  const auto layers = detail::dense_layers(params, mask);
  if (batch.cols() != layers.front().weight->cols())
    throw std::invalid_argument("batch width " + std::to_string(batch.cols()) + " does not match " +
                                weight_name(0) + " fan-in " + std::to_string(layers.front().weight->cols()));
  ForwardTrace<Scalar> trace;
  Matrix<Scalar> h = batch;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix<Scalar> w = detail::effective_weight(layers[l]);
    Matrix<Scalar> z(h.rows(), w.rows());
    z.noalias() = h * w.transpose();
    z.rowwise() += layers[l].bias->row(0);
    trace.inputs.push_back(std::move(h));
    trace.weights.push_back(std::move(w));
    if (l + 1 < layers.size()) {
      h = z.cwiseMax(Scalar(0));
    } else {
      trace.logits = std::move(z);
    }
  }
  return trace;
}

/// Logits for a [B, input_dim] batch. With a mask, prunable weights are
/// multiplied by it first, so masked weights contribute exactly zero.
template <typename Scalar>
Matrix<Scalar> forward(const BasicParamSet<Scalar>& params, const BasicMask<Scalar>* mask,
                       const Matrix<Scalar>& batch) {
  return forward_trace(params, mask, batch).logits;
}

/// Row-wise log-sum-exp.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_sum_exp(const Matrix<Scalar>& logits) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(logits.rows());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    out(r) = m + std::log((logits.row(r).array() - m).exp().sum());
  }
  return out;
}

template <typename Scalar>
void check_labels(std::span<const int> labels, Index rows, Index classes) {
  if (static_cast<Index>(labels.size()) != rows)
    throw std::invalid_argument("label count " + std::to_string(labels.size()) + " != batch rows " +
                                std::to_string(rows));
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw std::invalid_argument("label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) + ")");
}

/// Sum over rows of softmax cross-entropy.
template <typename Scalar>
Scalar cross_entropy_sum(const Matrix<Scalar>& logits, std::span<const int> labels) {
  check_labels<Scalar>(labels, logits.rows(), logits.cols());
  const auto lse = log_sum_exp(logits);
  Scalar total(0);
  for (Index r = 0; r < logits.rows(); ++r) total += lse(r) - logits(r, labels[r]);
  return total;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Index argmax_lowest(const Eigen::DenseBase<Derived>& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c)
    if (row(c) > row(best)) best = c;
  return best;
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss;
  BasicParamSet<Scalar> grads;
  Index correct = 0;  // argmax hits on the batch, a by-product of the forward pass
};

/// Mean softmax cross-entropy (no weight penalty) and its exact gradient.
/// Gradients at masked positions are exactly zero.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const BasicParamSet<Scalar>& params, const BasicMask<Scalar>* mask,
                                  const Matrix<Scalar>& batch, std::span<const int> labels) {
  auto trace = forward_trace(params, mask, batch);
  const Matrix<Scalar>& logits = trace.logits;
  check_labels<Scalar>(labels, logits.rows(), logits.cols());
  const Index rows = logits.rows();
  const auto lse = log_sum_exp(logits);

  LossAndGrad<Scalar> out{Scalar(0), params.zeros_like(), 0};
  Matrix<Scalar> delta(rows, logits.cols());
  for (Index r = 0; r < rows; ++r) {
    out.loss += lse(r) - logits(r, labels[r]);
    delta.row(r) = (logits.row(r).array() - lse(r)).exp().matrix();
    delta(r, labels[r]) -= Scalar(1);
    if (argmax_lowest(logits.row(r)) == labels[r]) ++out.correct;
  }
  out.loss /= static_cast<Scalar>(rows);
  if (!std::isfinite(static_cast<double>(out.loss))) throw std::runtime_error("non-finite loss");
  delta /= static_cast<Scalar>(rows);

  for (std::size_t l = trace.inputs.size(); l-- > 0;) {
    auto& dw = out.grads[2 * l].value;
    auto& db = out.grads[2 * l + 1].value;
    dw.noalias() = delta.transpose() * trace.inputs[l];
    if (mask != nullptr) dw = dw.cwiseProduct(*mask->find(weight_name(l)));
    db = delta.colwise().sum();
    if (l == 0) break;
    Matrix<Scalar> upstream(rows, trace.weights[l].cols());
    upstream.noalias() = delta * trace.weights[l];
    // ReLU gate: the layer input is the post-activation, positive iff active.
    delta = upstream.cwiseProduct((trace.inputs[l].array() > Scalar(0)).template cast<Scalar>().matrix());
  }
  return out;
}

}  // namespace sparse_lab
