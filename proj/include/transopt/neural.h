// Copyright 2026 The TransOpt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Feed-forward networks with hand-derived backpropagation.
//
// Batches are Eigen matrices with one sample per column. Layer 0 is the
// input-adjacent layer: forward(x) = f_{L-1}(... f_1(f_0(x))), with
// f_l(z) = activation_l(W_l z + b_l).
//
// A CombinedNetwork is a shared encoder feeding two heads: a decoder that
// reconstructs the input and a regression head that predicts simulator
// outputs. The encoder ends in tanh, so latent codes live in (-1, 1)^d.

#ifndef TRANSOPT_NEURAL_H_
#define TRANSOPT_NEURAL_H_

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "json.hpp"

namespace transopt {

enum class Activation { kTanh, kIdentity };

struct LayerSpec {
  std::size_t input_width = 1;
  std::size_t output_width = 1;
  Activation activation = Activation::kTanh;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd inputs;  // d loss / d input batch

  // Same ordering as Mlp::parameters().
  Eigen::VectorXd flatten() const;
};

class Mlp {
 public:
  // Activations of every layer for one batch; activations[0] is the input.
  struct Trace {
    std::vector<Eigen::MatrixXd> activations;
    const Eigen::MatrixXd& output() const { return activations.back(); }
  };

  Mlp() = default;
  // Zero-initialized parameters. Throws ConfigError if widths are zero or
  // adjacent layers do not chain.
  explicit Mlp(std::vector<LayerSpec> layers);

  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(std::vector<LayerSpec> layers, std::uint64_t seed);
  void initialize_glorot(std::mt19937_64& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t input_width() const;
  std::size_t output_width() const;

  Eigen::MatrixXd& weight(std::size_t l) { return weights_.at(l); }
  const Eigen::MatrixXd& weight(std::size_t l) const { return weights_.at(l); }
  Eigen::VectorXd& bias(std::size_t l) { return biases_.at(l); }
  const Eigen::VectorXd& bias(std::size_t l) const { return biases_.at(l); }

  // Throws ConfigError on dimension mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
  Trace forward_trace(const Eigen::MatrixXd& inputs) const;

  // Reverse-mode pass given d loss / d output for the traced batch.
  // Throws NumericError naming the layer on non-finite intermediates.
  MlpGradient backward(const Trace& trace,
                       const Eigen::MatrixXd& output_gradient) const;

  // Weights (row-major) then bias, layer by layer.
  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  // Adds `scale * gradient` to every parameter.
  void apply_update(const MlpGradient& gradient, double scale);

  double weight_norm_squared() const;
  bool all_finite() const;

  // Exact parameter and layout equality.
  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

// (1/N) sum_i ||predicted_i - observed_i||^2 over columns. Throws
// ConfigError when N = 0 or shapes differ.
double mse_loss(const Eigen::MatrixXd& predicted,
                const Eigen::MatrixXd& observed);
Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& predicted,
                             const Eigen::MatrixXd& observed);

// sum_i sum_j max(0, p_ij - upper_j)^2 + max(0, lower_j - p_ij)^2.
double boundary_penalty(const Eigen::MatrixXd& predicted,
                        const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper);
// Derivative of boundary_penalty; exactly zero inside and on the bounds.
Eigen::MatrixXd boundary_penalty_gradient(const Eigen::MatrixXd& predicted,
                                          const Eigen::VectorXd& lower,
                                          const Eigen::VectorXd& upper);

// Loss of a single Mlp: mse, optionally plus a weighted boundary penalty on
// the outputs, plus l2_penalty * sum of squared weights.
struct MlpLoss {
  bool boundary = false;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double penalty_weight = 1.0;
  double l2_penalty = 0.0;
};

struct MlpLossResult {
  double loss = 0.0;
  MlpGradient gradient;
};

MlpLossResult mlp_loss_and_gradient(const Mlp& net,
                                    const Eigen::MatrixXd& inputs,
                                    const Eigen::MatrixXd& targets,
                                    const MlpLoss& spec);

struct TrainConfig {
  double learning_rate = 1e-2;
  int epochs = 500;
  int batch_size = 16;
  double l2_penalty = 1e-4;
  double penalty_weight = 1.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct CombinedArchitecture {
  std::vector<std::size_t> encoder_hidden{16};
  std::size_t latent_dim = 5;
  std::vector<std::size_t> decoder_hidden{16};
  std::vector<std::size_t> regression_hidden{32};
};

class CombinedNetwork {
 public:
  CombinedNetwork() = default;

  // Builds encoder p -> hidden -> d (tanh throughout), decoder
  // d -> hidden -> p and regression head d -> hidden -> m (tanh hidden,
  // identity output). Inputs are scaled from [lower, upper] to [-1, 1];
  // outputs are standardized with identity scaling until trained.
  static CombinedNetwork create(const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper,
                                std::size_t output_dim,
                                const CombinedArchitecture& arch,
                                std::uint64_t seed);

  Mlp encoder;
  Mlp decoder;
  Mlp regression;
  Eigen::VectorXd input_lower;
  Eigen::VectorXd input_upper;
  Eigen::VectorXd output_mean;
  Eigen::VectorXd output_scale;

  std::size_t input_dim() const { return encoder.input_width(); }
  std::size_t latent_dim() const { return encoder.output_width(); }
  std::size_t output_dim() const { return regression.output_width(); }

  // Affine maps between the original input box and [-1, 1].
  Eigen::MatrixXd scale_inputs(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd unscale_inputs(const Eigen::MatrixXd& scaled) const;
  Eigen::MatrixXd standardize_outputs(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd unstandardize_outputs(const Eigen::MatrixXd& scaled) const;

  // Original-space input -> latent code in (-1, 1)^d.
  Eigen::VectorXd encode(const Eigen::VectorXd& theta) const;
  // Latent code -> original-space input, hard-clipped to the bounds. Total
  // over R^d.
  Eigen::VectorXd decode(const Eigen::VectorXd& z) const;
  // Original-space input -> predicted simulator output (original units).
  Eigen::VectorXd predict(const Eigen::VectorXd& theta) const;

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;  // encoder, decoder, regression
  void set_parameters(const Eigen::VectorXd& flat);

  friend bool operator==(const CombinedNetwork& a, const CombinedNetwork& b);
};

struct CombinedLossTerms {
  double regression = 0.0;
  double reconstruction = 0.0;
  double penalty = 0.0;
  double l2 = 0.0;
  double total() const { return regression + reconstruction + penalty + l2; }
};

struct CombinedGradient {
  MlpGradient encoder;
  MlpGradient decoder;
  MlpGradient regression;
  Eigen::VectorXd flatten() const;
};

struct CombinedLossResult {
  CombinedLossTerms terms;
  CombinedGradient gradient;
};

// Joint objective in scaled coordinates:
//   mse(regression(encoder(s)), y) + mse(decoder(encoder(s)), s)
//   + penalty_weight * boundary_penalty(decoder(encoder(s)), -1, 1)
//   + l2_penalty * ||W||^2
// where `scaled_inputs` are in [-1, 1] and `scaled_targets` standardized.
CombinedLossResult combined_loss_and_gradient(
    const CombinedNetwork& net, const Eigen::MatrixXd& scaled_inputs,
    const Eigen::MatrixXd& scaled_targets, const TrainConfig& cfg);

struct TrainedCombined {
  CombinedNetwork network;
  // Full-dataset objective before training, then after every epoch.
  std::vector<double> loss_trace;
};

// Mini-batch SGD on the joint objective. `inputs` (p x N) and `outputs`
// (m x N) are in original units; output standardization statistics are
// computed here and stored on the returned network. Throws NumericError
// naming the epoch if the loss becomes non-finite.
TrainedCombined train_combined(CombinedNetwork net,
                               const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& outputs,
                               const TrainConfig& cfg);

// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-4) over all
// parameters, with central differences of step h.
using LossFunction = std::function<double(const Eigen::VectorXd&)>;
using GradientFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
double gradient_check(const LossFunction& loss, const GradientFunction& grad,
                      const Eigen::VectorXd& parameters, double h);
double gradient_check(const Mlp& net, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, const MlpLoss& spec,
                      double h = 1e-5);
double gradient_check(const CombinedNetwork& net,
                      const Eigen::MatrixXd& scaled_inputs,
                      const Eigen::MatrixXd& scaled_targets,
                      const TrainConfig& cfg, double h = 1e-5);

void to_json(nlohmann::json& j, const Mlp& net);
void from_json(const nlohmann::json& j, Mlp& net);
void to_json(nlohmann::json& j, const CombinedNetwork& net);
void from_json(const nlohmann::json& j, CombinedNetwork& net);

}  // namespace transopt

#endif  // TRANSOPT_NEURAL_H_
