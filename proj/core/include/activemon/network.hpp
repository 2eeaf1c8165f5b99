#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "activemon/data.hpp"
#include "activemon/textio.hpp"

namespace activemon {

struct NetworkArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // ReLU layer widths
  std::size_t feature_layer = 0;    // index into `hidden`
  std::size_t num_classes = 0;

  std::size_t feature_dim() const { return hidden.at(feature_layer); }
  void validate() const;
  bool operator==(const NetworkArch&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

// Dense layer computing weights * x + bias; weights are (out x in).
struct Layer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  bool operator==(const Layer& o) const { return weights == o.weights && bias == o.bias; }
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
Layer glorot_layer(std::size_t out, std::size_t in, std::mt19937_64& rng);

struct Prediction {
  ClassId label = 0;         // dense output index, lowest index wins ties
  Eigen::VectorXd softmax;   // over arch.num_classes
  Eigen::VectorXd features;  // post-ReLU valuation of the feature layer
};

class Network {
 public:
  Network() = default;
  static Network initialize(const NetworkArch& arch, std::uint64_t seed);

  const NetworkArch& arch() const { return arch_; }
  // Hidden layers in order, output layer last.
  const std::vector<Layer>& layers() const { return layers_; }
  // Leading layers excluded from gradient updates.
  std::size_t frozen_layers() const { return frozen_; }
  std::size_t parameter_count() const;

  Prediction classify(std::span<const double> input) const;
  Prediction classify(const InputSample& input) const { return classify(input.pixels); }

  bool operator==(const Network& o) const {
    return arch_ == o.arch_ && layers_ == o.layers_ && frozen_ == o.frozen_;
  }

 private:
  friend class NetworkTrainer;
  friend Network read_network(textio::Reader& r);

  NetworkArch arch_;
  std::vector<Layer> layers_;
  std::size_t frozen_ = 0;
};

struct TrainResult {
  Network network;
  double train_accuracy = 0.0;
  // Mean cross-entropy over the training set before training and after each epoch.
  std::vector<double> loss_history;
};

// Inputs as an (input_dim x n) matrix and dense labels.
Eigen::MatrixXd to_matrix(const Dataset& d);

TrainResult train(const NetworkArch& arch, const Dataset& dataset, const TrainConfig& config);

// Continues SGD on all non-frozen layers of `net`.
TrainResult fine_tune(const Network& net, const Dataset& dataset, const TrainConfig& config);

// Output-head surgery: layers up to and including the feature layer are
// copied and frozen, a fresh output layer with `new_num_classes` units is
// attached and trained together with any hidden layers above the feature
// layer. `net` is not modified.
TrainResult transfer_extend(const Network& net, std::size_t new_num_classes, const Dataset& dataset,
                            const TrainConfig& config);

// Same class count: freezes through the feature layer and retrains the rest.
TrainResult retrain_head(const Network& net, const Dataset& dataset, const TrainConfig& config);

double test_accuracy(const Network& net, const Dataset& dataset);

// Cross-entropy of a single sample and its analytic gradient, one entry per
// layer (weights then bias).
double sample_loss(const Network& net, const LabeledSample& sample);
std::vector<Layer> loss_gradient(const Network& net, const LabeledSample& sample);

// Largest relative error between analytic and central-difference gradients
// (step 1e-5) over a seeded subsample of the parameters. Parameters whose
// step flips a hidden ReLU are skipped.
double gradient_check(const Network& net, const LabeledSample& sample, std::uint64_t seed = 0);

void write_network(textio::Writer& w, const Network& net);
Network read_network(textio::Reader& r);
void save_network(const Network& net, std::ostream& out);
Network load_network(std::istream& in);

}  // namespace activemon
