#pragma once

#include <dmap/convnet/network.hpp>
#include <dmap/dataset.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dmap::nn {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs_per_round = 10;
  std::size_t mining_rounds = 5;
  std::size_t batch_size = 16;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw InvalidArgument("TrainConfig: learning_rate must be finite and non-negative");
    if (epochs_per_round < 1)
      throw InvalidArgument("TrainConfig: epochs_per_round must be >= 1");
    if (batch_size < 1)
      throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  }
};

/// Per-layer gradients, parallel to Network::layers().
using Gradients = std::vector<ParamGrad>;

inline Gradients zero_gradients(const Network& net) {
  Gradients g;
  g.reserve(net.layers().size());
  for (const Layer& l : net.layers())
    g.push_back(zero_grad(l));
  return g;
}

/// Propagates dL/d(acts[end]) back through layers [0, end), accumulating into `grads`.
/// Returns dL/d(input).
inline Tensor backpropagate(const Network& net, const std::vector<Tensor>& acts, std::size_t end,
                            Tensor grad, Gradients& grads) {
  for (std::size_t i = end; i-- > 0;)
    grad = backward(net.layers()[i], acts[i], grad, grads[i]);
  return grad;
}

/// Cross-entropy of one sample; accumulates parameter gradients.
/// Uses the fused softmax/cross-entropy gradient p - onehot at the logits.
inline double accumulate_sample(const Network& net, const Tensor& input, std::size_t target,
                                Gradients& grads) {
  const std::vector<Tensor> acts = net.forward_trace(input);
  const std::size_t softmax_at = net.layers().size() - 1;
  const Tensor& logits = acts[softmax_at];
  const Tensor& probs = acts.back();

  const double m = *std::max_element(logits.values.begin(), logits.values.end());
  double sum = 0.0;
  for (double z : logits.values)
    sum += std::exp(z - m);
  const double loss = m + std::log(sum) - logits.values[target];

  Tensor grad = probs;
  grad.values[target] -= 1.0;
  backpropagate(net, acts, softmax_at, std::move(grad), grads);
  return loss;
}

inline void apply_sgd(Network& net, const Gradients& grads, double step) {
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    auto update = [&](std::vector<double>& w, std::vector<double>& b) {
      for (std::size_t k = 0; k < w.size(); ++k)
        w[k] -= step * grads[i].weights[k];
      for (std::size_t k = 0; k < b.size(); ++k)
        b[k] -= step * grads[i].bias[k];
    };
    Layer& l = net.layer(i);
    if (auto* c = std::get_if<Conv>(&l))
      update(c->weights, c->bias);
    else if (auto* f = std::get_if<FullyConnected>(&l))
      update(f->weights, f->bias);
  }
}

namespace detail {

inline void check_training_data(const Network& net, std::span<const LabeledPatch> data) {
  if (data.empty())
    throw InvalidArgument("sgd_train: empty dataset");
  if (net.mode() != NetworkMode::Patch)
    throw InvalidArgument("sgd_train: network is not in patch mode");
  for (const LabeledPatch& p : data) {
    if (!p.pixels.centered())
      throw InvalidArgument("sgd_train: patches must be mean-subtracted");
    if (Shape{p.pixels.height(), p.pixels.width(), p.pixels.channels()} != net.input_shape())
      throw InvalidArgument("sgd_train: patch shape does not match the network input");
  }
}

inline bool parameters_finite(const Network& net) {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  for (const Layer& l : net.layers()) {
    if (const auto* c = std::get_if<Conv>(&l); c && !(finite(c->weights) && finite(c->bias)))
      return false;
    if (const auto* f = std::get_if<FullyConnected>(&l); f && !(finite(f->weights) && finite(f->bias)))
      return false;
  }
  return true;
}

} // namespace detail

/// Runs `epochs` epochs of minibatch SGD in place; returns the mean loss per epoch.
inline std::vector<double> train_epochs(Network& net, std::span<const LabeledPatch> data,
                                        const TrainConfig& cfg, std::size_t epochs,
                                        std::mt19937_64& rng) {
  detail::check_training_data(net, data);
  std::vector<Tensor> inputs;
  inputs.reserve(data.size());
  for (const LabeledPatch& p : data)
    inputs.push_back(to_tensor(p.pixels));

  std::vector<std::size_t> order(data.size());
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Gradients grads = zero_gradients(net);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        total += accumulate_sample(net, inputs[idx], static_cast<std::size_t>(data[idx].label),
                                   grads);
      }
      if (!std::isfinite(total))
        throw DivergenceError("sgd_train: non-finite loss in epoch " + std::to_string(epoch + 1) +
                              "; lower the learning rate");
      apply_sgd(net, grads, cfg.learning_rate / static_cast<double>(stop - start));
      if (!detail::parameters_finite(net))
        throw DivergenceError("sgd_train: non-finite weights in epoch " +
                              std::to_string(epoch + 1) + "; lower the learning rate");
    }
    history.push_back(total / static_cast<double>(data.size()));
  }
  return history;
}

struct TrainResult {
  Network net;
  std::vector<double> loss_history; // mean loss per epoch
};

/// Trains for cfg.epochs_per_round epochs.
inline TrainResult sgd_train(Network net, std::span<const LabeledPatch> data,
                             const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  auto history = train_epochs(net, data, cfg, cfg.epochs_per_round, rng);
  return {std::move(net), std::move(history)};
}

/// Indices of Built patches the network scores below 0.5.
inline std::vector<std::size_t> false_negatives(const Network& net,
                                                std::span<const LabeledPatch> pool) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].label == PatchLabel::Built && forward_patch(net, pool[i].pixels).built < 0.5)
      out.push_back(i);
  return out;
}

struct MiningRound {
  std::size_t round = 0;          // 1-based
  std::size_t train_size = 0;     // before this round's additions
  std::size_t false_negatives = 0;
  double final_loss = 0.0;        // mean loss of the round's last epoch
};

struct MiningResult {
  Network net;
  std::vector<LabeledPatch> train; // final training set, including mined duplicates
  std::vector<MiningRound> rounds;
  std::vector<double> loss_history;
};

/// Alternates cfg.epochs_per_round epochs of SGD with a pass over `pool`;
/// every Built patch scored below 0.5 is appended to the training set.
inline MiningResult hard_negative_mine(Network net, std::vector<LabeledPatch> train,
                                       std::span<const LabeledPatch> pool,
                                       const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  MiningResult result;
  for (std::size_t round = 1; round <= cfg.mining_rounds; ++round) {
    const auto losses = train_epochs(net, train, cfg, cfg.epochs_per_round, rng);
    result.loss_history.insert(result.loss_history.end(), losses.begin(), losses.end());
    const auto missed = false_negatives(net, pool);
    result.rounds.push_back({round, train.size(), missed.size(), losses.back()});
    for (std::size_t i : missed)
      train.push_back(pool[i]);
  }
  result.net = std::move(net);
  result.train = std::move(train);
  return result;
}

/// Fraction of Built patches scored >= 0.5; 1 when there are none.
inline double recall(const Network& net, std::span<const LabeledPatch> data) {
  std::size_t built = 0;
  std::size_t hit = 0;
  for (const LabeledPatch& p : data) {
    if (p.label != PatchLabel::Built)
      continue;
    ++built;
    if (forward_patch(net, p.pixels).built >= 0.5)
      ++hit;
  }
  return built == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(built);
}

} // namespace dmap::nn
