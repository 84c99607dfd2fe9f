#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

namespace boapta {

/// Netlist feature extractor: 7 -> 16 -> 16 -> 7 with sigmoid hidden layers
/// and a linear output layer.  weights[l] maps layer l to layer l + 1.
struct MlpWeights {
  static constexpr int kInput = 7;
  static constexpr int kHidden = 16;
  static constexpr int kLayers = 3;

  std::array<Eigen::MatrixXd, kLayers> weights;
  std::array<Eigen::VectorXd, kLayers> biases;

  static MlpWeights zeros();
  /// Glorot-uniform weights, zero biases.
  static MlpWeights random(std::uint64_t seed);

  static int parameter_count();
  /// Row-major weights then biases, layer by layer.
  void pack(Eigen::Ref<Eigen::VectorXd> out) const;
  void unpack(const Eigen::Ref<const Eigen::VectorXd>& in);
};

/// Per-row forward pass over a batch (rows are inputs).  Hidden activations
/// are kept for the backward pass.
struct MlpTape {
  Eigen::MatrixXd input;
  std::array<Eigen::MatrixXd, MlpWeights::kLayers - 1> hidden;
  Eigen::MatrixXd output;
};

MlpTape mlp_forward_batch(const Eigen::MatrixXd& inputs, const MlpWeights& w);

/// Single input.  Throws std::invalid_argument on a dimension mismatch.
Eigen::VectorXd mlp_forward(const Eigen::VectorXd& input, const MlpWeights& w);

/// Back-propagates dL/d(output) (same shape as tape.output) to the weights.
MlpWeights mlp_backward(const MlpTape& tape, const MlpWeights& w, const Eigen::MatrixXd& grad_output);

}  // namespace boapta
