#include "boapta/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace boapta {

namespace {

constexpr std::array<int, MlpWeights::kLayers + 1> kWidths = {MlpWeights::kInput, MlpWeights::kHidden,
                                                               MlpWeights::kHidden, MlpWeights::kInput};

Eigen::MatrixXd logistic(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

}  // namespace

MlpWeights MlpWeights::zeros() {
  MlpWeights w;
  for (int l = 0; l < kLayers; ++l) {
    w.weights[l] = Eigen::MatrixXd::Zero(kWidths[l + 1], kWidths[l]);
    w.biases[l] = Eigen::VectorXd::Zero(kWidths[l + 1]);
  }
  return w;
}

MlpWeights MlpWeights::random(std::uint64_t seed) {
  MlpWeights w = zeros();
  std::mt19937_64 rng(seed);
  for (int l = 0; l < kLayers; ++l) {
    const double limit = std::sqrt(6.0 / (kWidths[l] + kWidths[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < w.weights[l].size(); ++i) w.weights[l].data()[i] = dist(rng);
  }
  return w;
}

int MlpWeights::parameter_count() {
  int n = 0;
  for (int l = 0; l < kLayers; ++l) n += kWidths[l + 1] * kWidths[l] + kWidths[l + 1];
  return n;
}

void MlpWeights::pack(Eigen::Ref<Eigen::VectorXd> out) const {
  Eigen::Index at = 0;
  for (int l = 0; l < kLayers; ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out[at++] = weights[l](r, c);
    out.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
}

void MlpWeights::unpack(const Eigen::Ref<const Eigen::VectorXd>& in) {
  *this = zeros();
  Eigen::Index at = 0;
  for (int l = 0; l < kLayers; ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = in[at++];
    biases[l] = in.segment(at, biases[l].size());
    at += biases[l].size();
  }
}

MlpTape mlp_forward_batch(const Eigen::MatrixXd& inputs, const MlpWeights& w) {
  if (inputs.cols() != MlpWeights::kInput) throw std::invalid_argument("mlp: expected 7 input features");
  MlpTape tape;
  tape.input = inputs;
  Eigen::MatrixXd act = inputs;
  for (int l = 0; l < MlpWeights::kLayers; ++l) {
    Eigen::MatrixXd z = (act * w.weights[l].transpose()).rowwise() + w.biases[l].transpose();
    if (l + 1 < MlpWeights::kLayers) {
      tape.hidden[l] = logistic(z);
      act = tape.hidden[l];
    } else {
      tape.output = std::move(z);
    }
  }
  return tape;
}

Eigen::VectorXd mlp_forward(const Eigen::VectorXd& input, const MlpWeights& w) {
  if (input.size() != MlpWeights::kInput) throw std::invalid_argument("mlp: expected 7 input features");
  return mlp_forward_batch(input.transpose(), w).output.row(0).transpose();
}

MlpWeights mlp_backward(const MlpTape& tape, const MlpWeights& w, const Eigen::MatrixXd& grad_output) {
  MlpWeights g = MlpWeights::zeros();
  Eigen::MatrixXd delta = grad_output;  // dL/dz at the current layer
  for (int l = MlpWeights::kLayers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& below = l == 0 ? tape.input : tape.hidden[l - 1];
    g.weights[l] = delta.transpose() * below;
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      const Eigen::MatrixXd& h = tape.hidden[l - 1];
      delta = ((delta * w.weights[l]).array() * h.array() * (1.0 - h.array())).matrix();
    }
  }
  return g;
}

}  // namespace boapta
