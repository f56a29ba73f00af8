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

#include "transopt/neural.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "transopt/error.h"

namespace transopt {

namespace {

Eigen::MatrixXd activate(Activation activation, const Eigen::MatrixXd& z) {
  switch (activation) {
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kIdentity:
      return z;
  }
  return z;
}

// d activation / d z expressed through the activation output a.
Eigen::MatrixXd activation_slope(Activation activation,
                                 const Eigen::MatrixXd& a) {
  switch (activation) {
    case Activation::kTanh:
      return (1.0 - a.array().square()).matrix();
    case Activation::kIdentity:
      return Eigen::MatrixXd::Ones(a.rows(), a.cols());
  }
  return Eigen::MatrixXd::Ones(a.rows(), a.cols());
}

const char* activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError(fmt::format("unknown activation '{}'", name));
}

std::vector<LayerSpec> chain(std::size_t input,
                             const std::vector<std::size_t>& hidden,
                             std::size_t output, Activation final) {
  std::vector<LayerSpec> layers;
  std::size_t width = input;
  for (const std::size_t h : hidden) {
    layers.push_back({width, h, Activation::kTanh});
    width = h;
  }
  layers.push_back({width, output, final});
  return layers;
}

}  // namespace

Eigen::VectorXd MlpGradient::flatten() const {
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    total += weights[l].size() + biases[l].size();
  }
  Eigen::VectorXd flat(total);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) {
        flat[at++] = weights[l](r, c);
      }
    }
    flat.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return flat;
}

Mlp::Mlp(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("an Mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerSpec& spec = layers_[l];
    if (spec.input_width == 0 || spec.output_width == 0) {
      throw ConfigError(fmt::format("layer {} has a zero width", l));
    }
    if (l > 0 && layers_[l - 1].output_width != spec.input_width) {
      throw ConfigError(fmt::format(
          "layer {} input width {} does not match layer {} output width {}", l,
          spec.input_width, l - 1, layers_[l - 1].output_width));
    }
    weights_.push_back(Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(spec.output_width),
        static_cast<Eigen::Index>(spec.input_width)));
    biases_.push_back(
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.output_width)));
  }
}

Mlp Mlp::glorot(std::vector<LayerSpec> layers, std::uint64_t seed) {
  Mlp net(std::move(layers));
  std::mt19937_64 rng(seed);
  net.initialize_glorot(rng);
  return net;
}

void Mlp::initialize_glorot(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const double limit = std::sqrt(
        6.0 / static_cast<double>(layers_[l].input_width +
                                  layers_[l].output_width));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
        weights_[l](r, c) = dist(rng);
      }
    }
    biases_[l].setZero();
  }
}

std::size_t Mlp::input_width() const {
  return layers_.empty() ? 0 : layers_.front().input_width;
}

std::size_t Mlp::output_width() const {
  return layers_.empty() ? 0 : layers_.back().output_width;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (layers_.empty() ||
      static_cast<std::size_t>(inputs.rows()) != input_width()) {
    throw ConfigError(fmt::format("input has {} rows, network expects {}",
                                  inputs.rows(), input_width()));
  }
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    a = activate(layers_[l].activation, z);
  }
  return a;
}

Mlp::Trace Mlp::forward_trace(const Eigen::MatrixXd& inputs) const {
  if (layers_.empty() ||
      static_cast<std::size_t>(inputs.rows()) != input_width()) {
    throw ConfigError(fmt::format("input has {} rows, network expects {}",
                                  inputs.rows(), input_width()));
  }
  Trace trace;
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(inputs);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * trace.activations.back();
    z.colwise() += biases_[l];
    trace.activations.push_back(activate(layers_[l].activation, z));
  }
  return trace;
}

MlpGradient Mlp::backward(const Trace& trace,
                          const Eigen::MatrixXd& output_gradient) const {
  if (trace.activations.size() != layers_.size() + 1) {
    throw ConfigError("trace does not belong to this network");
  }
  MlpGradient grad;
  grad.weights.resize(layers_.size());
  grad.biases.resize(layers_.size());
  Eigen::MatrixXd delta = output_gradient;  // d loss / d a_{l+1}
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& out = trace.activations[l + 1];
    delta = (delta.array() *
             activation_slope(layers_[l].activation, out).array())
                .matrix();  // now d loss / d z_l
    if (!delta.allFinite()) {
      throw NumericError(fmt::format("non-finite gradient at layer {}", l));
    }
    grad.weights[l] = delta * trace.activations[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    delta = weights_[l].transpose() * delta;
  }
  grad.inputs = std::move(delta);
  return grad;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  MlpGradient view{weights_, biases_, {}};
  return view.flatten();
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ConfigError(fmt::format("expected {} parameters, got {}",
                                  parameter_count(), flat.size()));
  }
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
        weights_[l](r, c) = flat[at++];
      }
    }
    biases_[l] = flat.segment(at, biases_[l].size());
    at += biases_[l].size();
  }
}

void Mlp::apply_update(const MlpGradient& gradient, double scale) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    weights_[l] += scale * gradient.weights[l];
    biases_[l] += scale * gradient.biases[l];
  }
}

double Mlp::weight_norm_squared() const {
  double total = 0.0;
  for (const auto& w : weights_) total += w.squaredNorm();
  return total;
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  }
  return true;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_ != b.layers_) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) {
      return false;
    }
  }
  return true;
}

double mse_loss(const Eigen::MatrixXd& predicted,
                const Eigen::MatrixXd& observed) {
  if (predicted.cols() == 0) throw ConfigError("mse_loss needs N >= 1");
  if (predicted.rows() != observed.rows() ||
      predicted.cols() != observed.cols()) {
    throw ConfigError(fmt::format("mse_loss shape mismatch: {}x{} vs {}x{}",
                                  predicted.rows(), predicted.cols(),
                                  observed.rows(), observed.cols()));
  }
  return (predicted - observed).squaredNorm() /
         static_cast<double>(predicted.cols());
}

Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& predicted,
                             const Eigen::MatrixXd& observed) {
  return 2.0 * (predicted - observed) / static_cast<double>(predicted.cols());
}

double boundary_penalty(const Eigen::MatrixXd& predicted,
                        const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < predicted.cols(); ++i) {
    for (Eigen::Index j = 0; j < predicted.rows(); ++j) {
      const double p = predicted(j, i);
      const double above = std::max(0.0, p - upper[j]);
      const double below = std::max(0.0, lower[j] - p);
      total += above * above + below * below;
    }
  }
  return total;
}

Eigen::MatrixXd boundary_penalty_gradient(const Eigen::MatrixXd& predicted,
                                          const Eigen::VectorXd& lower,
                                          const Eigen::VectorXd& upper) {
  Eigen::MatrixXd grad(predicted.rows(), predicted.cols());
  for (Eigen::Index i = 0; i < predicted.cols(); ++i) {
    for (Eigen::Index j = 0; j < predicted.rows(); ++j) {
      const double p = predicted(j, i);
      grad(j, i) = 2.0 * (std::max(0.0, p - upper[j]) -
                          std::max(0.0, lower[j] - p));
    }
  }
  return grad;
}

MlpLossResult mlp_loss_and_gradient(const Mlp& net,
                                    const Eigen::MatrixXd& inputs,
                                    const Eigen::MatrixXd& targets,
                                    const MlpLoss& spec) {
  const Mlp::Trace trace = net.forward_trace(inputs);
  const Eigen::MatrixXd& out = trace.output();
  MlpLossResult result;
  result.loss = mse_loss(out, targets);
  Eigen::MatrixXd d_out = mse_gradient(out, targets);
  if (spec.boundary) {
    result.loss +=
        spec.penalty_weight * boundary_penalty(out, spec.lower, spec.upper);
    d_out += spec.penalty_weight *
             boundary_penalty_gradient(out, spec.lower, spec.upper);
  }
  result.gradient = net.backward(trace, d_out);
  if (spec.l2_penalty != 0.0) {
    result.loss += spec.l2_penalty * net.weight_norm_squared();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      result.gradient.weights[l] += 2.0 * spec.l2_penalty * net.weight(l);
    }
  }
  return result;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size < 1 || epochs < 0 ||
      l2_penalty < 0.0 || penalty_weight < 0.0) {
    throw ConfigError(
        "train config: learning_rate > 0, batch_size >= 1, epochs >= 0 and "
        "non-negative penalties required");
  }
}

CombinedNetwork CombinedNetwork::create(const Eigen::VectorXd& lower,
                                        const Eigen::VectorXd& upper,
                                        std::size_t output_dim,
                                        const CombinedArchitecture& arch,
                                        std::uint64_t seed) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw ConfigError("input bounds must be non-empty and of equal length");
  }
  if (((upper - lower).array() <= 0.0).any()) {
    throw ConfigError("every upper bound must exceed its lower bound");
  }
  const auto p = static_cast<std::size_t>(lower.size());
  std::mt19937_64 rng(seed);
  CombinedNetwork net;
  net.encoder = Mlp(chain(p, arch.encoder_hidden, arch.latent_dim,
                          Activation::kTanh));
  net.decoder = Mlp(chain(arch.latent_dim, arch.decoder_hidden, p,
                          Activation::kIdentity));
  net.regression = Mlp(chain(arch.latent_dim, arch.regression_hidden,
                             output_dim, Activation::kIdentity));
  net.encoder.initialize_glorot(rng);
  net.decoder.initialize_glorot(rng);
  net.regression.initialize_glorot(rng);
  net.input_lower = lower;
  net.input_upper = upper;
  const auto m = static_cast<Eigen::Index>(output_dim);
  net.output_mean = Eigen::VectorXd::Zero(m);
  net.output_scale = Eigen::VectorXd::Ones(m);
  return net;
}

Eigen::MatrixXd CombinedNetwork::scale_inputs(const Eigen::MatrixXd& raw) const {
  const Eigen::ArrayXd half = 0.5 * (input_upper - input_lower).array();
  const Eigen::ArrayXd mid = 0.5 * (input_upper + input_lower).array();
  return ((raw.array().colwise() - mid).colwise() / half).matrix();
}

Eigen::MatrixXd CombinedNetwork::unscale_inputs(
    const Eigen::MatrixXd& scaled) const {
  const Eigen::ArrayXd half = 0.5 * (input_upper - input_lower).array();
  const Eigen::ArrayXd mid = 0.5 * (input_upper + input_lower).array();
  return ((scaled.array().colwise() * half).colwise() + mid).matrix();
}

Eigen::MatrixXd CombinedNetwork::standardize_outputs(
    const Eigen::MatrixXd& raw) const {
  return ((raw.array().colwise() - output_mean.array()).colwise() /
          output_scale.array())
      .matrix();
}

Eigen::MatrixXd CombinedNetwork::unstandardize_outputs(
    const Eigen::MatrixXd& scaled) const {
  return ((scaled.array().colwise() * output_scale.array()).colwise() +
          output_mean.array())
      .matrix();
}

Eigen::VectorXd CombinedNetwork::encode(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != input_dim()) {
    throw ConfigError(fmt::format("encode: input has {} entries, expected {}",
                                  theta.size(), input_dim()));
  }
  return encoder.forward(scale_inputs(theta));
}

Eigen::VectorXd CombinedNetwork::decode(const Eigen::VectorXd& z) const {
  if (static_cast<std::size_t>(z.size()) != latent_dim()) {
    throw ConfigError(fmt::format("decode: code has {} entries, expected {}",
                                  z.size(), latent_dim()));
  }
  const Eigen::VectorXd raw = unscale_inputs(decoder.forward(z));
  return raw.cwiseMax(input_lower).cwiseMin(input_upper);
}

Eigen::VectorXd CombinedNetwork::predict(const Eigen::VectorXd& theta) const {
  return unstandardize_outputs(regression.forward(encode(theta)));
}

std::size_t CombinedNetwork::parameter_count() const {
  return encoder.parameter_count() + decoder.parameter_count() +
         regression.parameter_count();
}

Eigen::VectorXd CombinedNetwork::parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  flat << encoder.parameters(), decoder.parameters(), regression.parameters();
  return flat;
}

void CombinedNetwork::set_parameters(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ConfigError(fmt::format("expected {} parameters, got {}",
                                  parameter_count(), flat.size()));
  }
  const auto ne = static_cast<Eigen::Index>(encoder.parameter_count());
  const auto nd = static_cast<Eigen::Index>(decoder.parameter_count());
  const auto nr = static_cast<Eigen::Index>(regression.parameter_count());
  encoder.set_parameters(flat.segment(0, ne));
  decoder.set_parameters(flat.segment(ne, nd));
  regression.set_parameters(flat.segment(ne + nd, nr));
}

bool operator==(const CombinedNetwork& a, const CombinedNetwork& b) {
  return a.encoder == b.encoder && a.decoder == b.decoder &&
         a.regression == b.regression && a.input_lower == b.input_lower &&
         a.input_upper == b.input_upper && a.output_mean == b.output_mean &&
         a.output_scale == b.output_scale;
}

Eigen::VectorXd CombinedGradient::flatten() const {
  const Eigen::VectorXd e = encoder.flatten();
  const Eigen::VectorXd d = decoder.flatten();
  const Eigen::VectorXd r = regression.flatten();
  Eigen::VectorXd flat(e.size() + d.size() + r.size());
  flat << e, d, r;
  return flat;
}

CombinedLossResult combined_loss_and_gradient(
    const CombinedNetwork& net, const Eigen::MatrixXd& scaled_inputs,
    const Eigen::MatrixXd& scaled_targets, const TrainConfig& cfg) {
  const Mlp::Trace enc = net.encoder.forward_trace(scaled_inputs);
  const Mlp::Trace dec = net.decoder.forward_trace(enc.output());
  const Mlp::Trace reg = net.regression.forward_trace(enc.output());

  const auto p = scaled_inputs.rows();
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(p, -1.0);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(p, 1.0);

  CombinedLossResult result;
  result.terms.regression = mse_loss(reg.output(), scaled_targets);
  result.terms.reconstruction = mse_loss(dec.output(), scaled_inputs);
  result.terms.penalty =
      cfg.penalty_weight * boundary_penalty(dec.output(), lower, upper);
  result.terms.l2 = cfg.l2_penalty * (net.encoder.weight_norm_squared() +
                                      net.decoder.weight_norm_squared() +
                                      net.regression.weight_norm_squared());

  const Eigen::MatrixXd d_reg = mse_gradient(reg.output(), scaled_targets);
  const Eigen::MatrixXd d_dec =
      mse_gradient(dec.output(), scaled_inputs) +
      cfg.penalty_weight * boundary_penalty_gradient(dec.output(), lower, upper);
  result.gradient.regression = net.regression.backward(reg, d_reg);
  result.gradient.decoder = net.decoder.backward(dec, d_dec);
  result.gradient.encoder = net.encoder.backward(
      enc, result.gradient.regression.inputs + result.gradient.decoder.inputs);

  const auto add_l2 = [&](const Mlp& m, MlpGradient& g) {
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      g.weights[l] += 2.0 * cfg.l2_penalty * m.weight(l);
    }
  };
  if (cfg.l2_penalty != 0.0) {
    add_l2(net.encoder, result.gradient.encoder);
    add_l2(net.decoder, result.gradient.decoder);
    add_l2(net.regression, result.gradient.regression);
  }
  return result;
}

TrainedCombined train_combined(CombinedNetwork net,
                               const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& outputs,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.cols() != outputs.cols() || inputs.cols() == 0) {
    throw ConfigError(fmt::format(
        "train_combined: {} inputs vs {} outputs (need equal, >= 1)",
        inputs.cols(), outputs.cols()));
  }
  if (static_cast<std::size_t>(inputs.rows()) != net.input_dim() ||
      static_cast<std::size_t>(outputs.rows()) != net.output_dim()) {
    throw ConfigError("train_combined: data dimensions do not match network");
  }

  const double n = static_cast<double>(outputs.cols());
  net.output_mean = outputs.rowwise().mean();
  const Eigen::MatrixXd centered = outputs.colwise() - net.output_mean;
  net.output_scale = (centered.array().square().rowwise().sum() / n).sqrt();
  for (Eigen::Index j = 0; j < net.output_scale.size(); ++j) {
    if (!(net.output_scale[j] > 1e-12)) net.output_scale[j] = 1.0;
  }

  const Eigen::MatrixXd x = net.scale_inputs(inputs);
  const Eigen::MatrixXd y = net.standardize_outputs(outputs);

  TrainedCombined result;
  const auto full_loss = [&] {
    return combined_loss_and_gradient(net, x, y, cfg).terms.total();
  };
  result.loss_trace.push_back(full_loss());

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.cols()));
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<Eigen::Index>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < x.cols(); start += batch) {
      const Eigen::Index size = std::min(batch, x.cols() - start);
      Eigen::MatrixXd bx(x.rows(), size);
      Eigen::MatrixXd by(y.rows(), size);
      for (Eigen::Index k = 0; k < size; ++k) {
        bx.col(k) = x.col(order[static_cast<std::size_t>(start + k)]);
        by.col(k) = y.col(order[static_cast<std::size_t>(start + k)]);
      }
      CombinedLossResult step;
      try {
        step = combined_loss_and_gradient(net, bx, by, cfg);
      } catch (const NumericError& err) {
        throw NumericError(fmt::format("epoch {}: {}", epoch, err.what()));
      }
      net.encoder.apply_update(step.gradient.encoder, -cfg.learning_rate);
      net.decoder.apply_update(step.gradient.decoder, -cfg.learning_rate);
      net.regression.apply_update(step.gradient.regression,
                                  -cfg.learning_rate);
    }
    const double loss = full_loss();
    if (!std::isfinite(loss)) {
      throw NumericError(
          fmt::format("training diverged at epoch {} (loss {})", epoch, loss));
    }
    result.loss_trace.push_back(loss);
  }
  result.network = std::move(net);
  return result;
}

double gradient_check(const LossFunction& loss, const GradientFunction& grad,
                      const Eigen::VectorXd& parameters, double h) {
  if (!(h > 0.0)) throw ConfigError("gradient_check step must be > 0");
  const Eigen::VectorXd analytic = grad(parameters);
  double worst = 0.0;
  Eigen::VectorXd probe = parameters;
  for (Eigen::Index i = 0; i < parameters.size(); ++i) {
    probe[i] = parameters[i] + h;
    const double up = loss(probe);
    probe[i] = parameters[i] - h;
    const double down = loss(probe);
    probe[i] = parameters[i];
    const double numeric = (up - down) / (2.0 * h);
    const double scale =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

double gradient_check(const Mlp& net, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, const MlpLoss& spec,
                      double h) {
  Mlp work = net;
  const auto loss = [&](const Eigen::VectorXd& p) {
    work.set_parameters(p);
    return mlp_loss_and_gradient(work, inputs, targets, spec).loss;
  };
  const auto grad = [&](const Eigen::VectorXd& p) {
    work.set_parameters(p);
    return mlp_loss_and_gradient(work, inputs, targets, spec)
        .gradient.flatten();
  };
  return gradient_check(loss, grad, net.parameters(), h);
}

double gradient_check(const CombinedNetwork& net,
                      const Eigen::MatrixXd& scaled_inputs,
                      const Eigen::MatrixXd& scaled_targets,
                      const TrainConfig& cfg, double h) {
  CombinedNetwork work = net;
  const auto loss = [&](const Eigen::VectorXd& p) {
    work.set_parameters(p);
    return combined_loss_and_gradient(work, scaled_inputs, scaled_targets, cfg)
        .terms.total();
  };
  const auto grad = [&](const Eigen::VectorXd& p) {
    work.set_parameters(p);
    return combined_loss_and_gradient(work, scaled_inputs, scaled_targets, cfg)
        .gradient.flatten();
  };
  return gradient_check(loss, grad, net.parameters(), h);
}

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void to_json(nlohmann::json& j, const Mlp& net) {
  auto layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const LayerSpec& spec = net.layers()[l];
    std::vector<double> weights;
    const Eigen::MatrixXd& w = net.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) weights.push_back(w(r, c));
    }
    layers.push_back({{"input_width", spec.input_width},
                      {"output_width", spec.output_width},
                      {"activation", activation_name(spec.activation)},
                      {"weights", weights},
                      {"biases", vector_json(net.bias(l))}});
  }
  j = nlohmann::json{{"format", "transopt.mlp"}, {"version", 1},
                     {"layers", layers}};
}

void from_json(const nlohmann::json& j, Mlp& net) {
  if (j.value("format", "") != "transopt.mlp" || j.value("version", 0) != 1) {
    throw ConfigError("not a transopt.mlp version 1 document");
  }
  std::vector<LayerSpec> specs;
  for (const auto& layer : j.at("layers")) {
    specs.push_back({layer.at("input_width").get<std::size_t>(),
                     layer.at("output_width").get<std::size_t>(),
                     activation_from_name(layer.at("activation"))});
  }
  Mlp out(specs);
  std::size_t l = 0;
  for (const auto& layer : j.at("layers")) {
    const auto weights = layer.at("weights").get<std::vector<double>>();
    Eigen::MatrixXd& w = out.weight(l);
    if (static_cast<Eigen::Index>(weights.size()) != w.size()) {
      throw ConfigError(fmt::format("layer {} has {} weights, expected {}", l,
                                    weights.size(), w.size()));
    }
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = weights[at++];
    }
    Eigen::VectorXd b = vector_from_json(layer.at("biases"));
    if (b.size() != out.bias(l).size()) {
      throw ConfigError(fmt::format("layer {} has {} biases, expected {}", l,
                                    b.size(), out.bias(l).size()));
    }
    out.bias(l) = b;
    ++l;
  }
  net = std::move(out);
}

void to_json(nlohmann::json& j, const CombinedNetwork& net) {
  j = nlohmann::json{{"format", "transopt.combined"},
                     {"version", 1},
                     {"encoder", net.encoder},
                     {"decoder", net.decoder},
                     {"regression", net.regression},
                     {"input_lower", vector_json(net.input_lower)},
                     {"input_upper", vector_json(net.input_upper)},
                     {"output_mean", vector_json(net.output_mean)},
                     {"output_scale", vector_json(net.output_scale)}};
}

void from_json(const nlohmann::json& j, CombinedNetwork& net) {
  if (j.value("format", "") != "transopt.combined" ||
      j.value("version", 0) != 1) {
    throw ConfigError("not a transopt.combined version 1 document");
  }
  j.at("encoder").get_to(net.encoder);
  j.at("decoder").get_to(net.decoder);
  j.at("regression").get_to(net.regression);
  net.input_lower = vector_from_json(j.at("input_lower"));
  net.input_upper = vector_from_json(j.at("input_upper"));
  net.output_mean = vector_from_json(j.at("output_mean"));
  net.output_scale = vector_from_json(j.at("output_scale"));
}

}  // namespace transopt
