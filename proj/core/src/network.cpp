#include "activemon/network.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "activemon/error.hpp"
#include "activemon/textio.hpp"

namespace activemon {

namespace {

constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ull;
constexpr const char* kNetworkMagic = "activemon-network";
constexpr int kNetworkVersion = 1;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// Column-wise softmax, stabilized by the column max.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double m = z.col(c).maxCoeff();
    p.col(c) = (z.col(c).array() - m).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

double column_loss(const Eigen::VectorXd& logits, ClassId label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

ClassId argmax_lowest(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<ClassId>(best);
}

std::vector<ClassId> labels_of(const Dataset& d) {
  std::vector<ClassId> y;
  y.reserve(d.size());
  for (const auto& s : d.samples) y.push_back(s.label);
  return y;
}

void check_dataset(const NetworkArch& arch, const Dataset& d) {
  if (d.empty()) throw Error(ErrorCode::EmptyDataset, "training dataset is empty");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.samples[i].input.dim() != arch.input_dim) {
      throw Error(ErrorCode::ShapeMismatch, "sample " + std::to_string(i) + " has dimension " +
                                                std::to_string(d.samples[i].input.dim()) + ", network expects " +
                                                std::to_string(arch.input_dim));
    }
    if (d.samples[i].label >= arch.num_classes) {
      throw Error(ErrorCode::ShapeMismatch, "sample " + std::to_string(i) + " has label " +
                                                std::to_string(d.samples[i].label) + " but the network has " +
                                                std::to_string(arch.num_classes) + " outputs");
    }
  }
}

}  // namespace

void NetworkArch::validate() const {
  if (input_dim == 0) throw Error(ErrorCode::ShapeMismatch, "input_dim must be positive");
  if (hidden.empty()) throw Error(ErrorCode::ShapeMismatch, "at least one hidden layer is required");
  if (feature_layer >= hidden.size()) throw Error(ErrorCode::ShapeMismatch, "feature layer index out of range");
  if (num_classes == 0) throw Error(ErrorCode::ShapeMismatch, "num_classes must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) throw Error(ErrorCode::ShapeMismatch, "hidden widths must be positive");
  }
}

Layer glorot_layer(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Layer layer;
  layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = u(rng);
  }
  layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
  return layer;
}

// Internal access to Network for training and surgery.
class NetworkTrainer {
 public:
  static std::vector<Layer>& layers(Network& n) { return n.layers_; }
  static NetworkArch& arch(Network& n) { return n.arch_; }
  static void set_frozen(Network& n, std::size_t f) { n.frozen_ = f; }

  // Activations entering layer `upto` (i.e. after `upto` hidden layers).
  static Eigen::MatrixXd forward_prefix(const Network& n, const Eigen::MatrixXd& x, std::size_t upto) {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < upto; ++l) {
      const Layer& layer = n.layers_[l];
      a = relu((layer.weights * a).colwise() + layer.bias);
    }
    return a;
  }

  static Eigen::MatrixXd logits_from(const Network& n, const Eigen::MatrixXd& a_in, std::size_t from) {
    Eigen::MatrixXd a = a_in;
    const std::size_t out = n.layers_.size() - 1;
    for (std::size_t l = from; l < n.layers_.size(); ++l) {
      const Layer& layer = n.layers_[l];
      Eigen::MatrixXd z = (layer.weights * a).colwise() + layer.bias;
      a = l == out ? std::move(z) : relu(z);
    }
    return a;
  }

  static double mean_loss(const Network& n, const Eigen::MatrixXd& a_in, std::size_t from,
                          const std::vector<ClassId>& y) {
    const Eigen::MatrixXd logits = logits_from(n, a_in, from);
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) total += column_loss(logits.col(c), y[static_cast<std::size_t>(c)]);
    return total / static_cast<double>(logits.cols());
  }

  // Mini-batch SGD over layers [frozen, end). `x` holds raw inputs.
  static TrainResult sgd(Network net, const Eigen::MatrixXd& x, const std::vector<ClassId>& y,
                         const TrainConfig& cfg) {
    const std::size_t from = net.frozen_;
    const Eigen::MatrixXd base = forward_prefix(net, x, from);
    const std::size_t n = y.size();
    const std::size_t batch = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
    const std::size_t n_layers = net.layers_.size();
    std::mt19937_64 rng(cfg.seed ^ kShuffleSalt);

    TrainResult result;
    result.loss_history.push_back(mean_loss(net, base, from, y));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Eigen::MatrixXd> acts(n_layers - from + 1);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t m = std::min(batch, n - start);
        Eigen::MatrixXd a(base.rows(), static_cast<Eigen::Index>(m));
        Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.arch_.num_classes),
                                                       static_cast<Eigen::Index>(m));
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t idx = order[start + j];
          a.col(static_cast<Eigen::Index>(j)) = base.col(static_cast<Eigen::Index>(idx));
          onehot(static_cast<Eigen::Index>(y[idx]), static_cast<Eigen::Index>(j)) = 1.0;
        }
        acts[0] = std::move(a);
        for (std::size_t l = from; l < n_layers; ++l) {
          const Layer& layer = net.layers_[l];
          Eigen::MatrixXd z = (layer.weights * acts[l - from]).colwise() + layer.bias;
          acts[l - from + 1] = (l + 1 == n_layers) ? softmax_columns(z) : relu(z);
        }
        Eigen::MatrixXd grad = (acts.back() - onehot) / static_cast<double>(m);
        for (std::size_t l = n_layers; l-- > from;) {
          Layer& layer = net.layers_[l];
          const Eigen::MatrixXd& a_prev = acts[l - from];
          const Eigen::MatrixXd dw = grad * a_prev.transpose();
          const Eigen::VectorXd db = grad.rowwise().sum();
          if (l > from) {
            Eigen::MatrixXd back = layer.weights.transpose() * grad;
            grad = back.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
          }
          layer.weights -= cfg.learning_rate * dw;
          layer.bias -= cfg.learning_rate * db;
        }
      }
      result.loss_history.push_back(mean_loss(net, base, from, y));
    }

    const Eigen::MatrixXd logits = logits_from(net, base, from);
    std::size_t correct = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (argmax_lowest(logits.col(c)) == y[static_cast<std::size_t>(c)]) ++correct;
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    result.network = std::move(net);
    return result;
  }
};

Network Network::initialize(const NetworkArch& arch, std::uint64_t seed) {
  arch.validate();
  Network net;
  net.arch_ = arch;
  std::mt19937_64 rng(seed);
  std::size_t in = arch.input_dim;
  for (std::size_t w : arch.hidden) {
    net.layers_.push_back(glorot_layer(w, in, rng));
    in = w;
  }
  net.layers_.push_back(glorot_layer(arch.num_classes, in, rng));
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return total;
}

Prediction Network::classify(std::span<const double> input) const {
  if (input.size() != arch_.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input has dimension " + std::to_string(input.size()) +
                                              ", network expects " + std::to_string(arch_.input_dim));
  }
  Prediction p;
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  const std::size_t out = layers_.size() - 1;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weights * a + layers_[l].bias;
    if (l == out) {
      a = std::move(z);
    } else {
      a = z.cwiseMax(0.0);
      if (l == arch_.feature_layer) p.features = a;
    }
  }
  const double m = a.maxCoeff();
  p.softmax = (a.array() - m).exp().matrix();
  p.softmax /= p.softmax.sum();
  p.label = argmax_lowest(p.softmax);
  return p;
}

Eigen::MatrixXd to_matrix(const Dataset& d) {
  const std::size_t dim = d.input_dim();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(d.samples[i].input.pixels.data(), static_cast<Eigen::Index>(dim));
  }
  return x;
}

TrainResult train(const NetworkArch& arch, const Dataset& dataset, const TrainConfig& config) {
  arch.validate();
  check_dataset(arch, dataset);
  return NetworkTrainer::sgd(Network::initialize(arch, config.seed), to_matrix(dataset), labels_of(dataset), config);
}

TrainResult fine_tune(const Network& net, const Dataset& dataset, const TrainConfig& config) {
  check_dataset(net.arch(), dataset);
  return NetworkTrainer::sgd(net, to_matrix(dataset), labels_of(dataset), config);
}

TrainResult transfer_extend(const Network& net, std::size_t new_num_classes, const Dataset& dataset,
                            const TrainConfig& config) {
  if (new_num_classes <= net.arch().num_classes) {
    throw Error(ErrorCode::NotAnExtension, "cannot extend " + std::to_string(net.arch().num_classes) + " classes to " +
                                               std::to_string(new_num_classes));
  }
  std::vector<bool> seen(new_num_classes, false);
  for (const auto& s : dataset.samples) {
    if (s.label < new_num_classes) seen[s.label] = true;
  }
  for (std::size_t c = 0; c < new_num_classes; ++c) {
    if (!seen[c]) throw Error(ErrorCode::MissingClassData, "no training samples for class " + std::to_string(c));
  }

  Network extended = net;
  NetworkTrainer::arch(extended).num_classes = new_num_classes;
  auto& layers = NetworkTrainer::layers(extended);
  std::mt19937_64 rng(config.seed);
  layers.back() = glorot_layer(new_num_classes, static_cast<std::size_t>(layers.back().weights.cols()), rng);
  NetworkTrainer::set_frozen(extended, net.arch().feature_layer + 1);
  check_dataset(extended.arch(), dataset);
  return NetworkTrainer::sgd(std::move(extended), to_matrix(dataset), labels_of(dataset), config);
}

TrainResult retrain_head(const Network& net, const Dataset& dataset, const TrainConfig& config) {
  Network head = net;
  NetworkTrainer::set_frozen(head, std::max(net.frozen_layers(), net.arch().feature_layer + 1));
  check_dataset(head.arch(), dataset);
  return NetworkTrainer::sgd(std::move(head), to_matrix(dataset), labels_of(dataset), config);
}

double test_accuracy(const Network& net, const Dataset& dataset) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "test dataset is empty");
  std::size_t correct = 0;
  for (const auto& s : dataset.samples) {
    if (net.classify(s.input).label == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double sample_loss(const Network& net, const LabeledSample& sample) {
  const Eigen::MatrixXd x =
      Eigen::Map<const Eigen::VectorXd>(sample.input.pixels.data(), static_cast<Eigen::Index>(sample.input.dim()));
  const Eigen::MatrixXd logits = NetworkTrainer::logits_from(net, x, 0);
  return column_loss(logits.col(0), sample.label);
}

std::vector<Layer> loss_gradient(const Network& net, const LabeledSample& sample) {
  const auto& layers = net.layers();
  std::vector<Eigen::VectorXd> acts{
      Eigen::Map<const Eigen::VectorXd>(sample.input.pixels.data(), static_cast<Eigen::Index>(sample.input.dim()))};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::VectorXd z = layers[l].weights * acts.back() + layers[l].bias;
    if (l + 1 == layers.size()) {
      const double m = z.maxCoeff();
      Eigen::VectorXd p = (z.array() - m).exp().matrix();
      acts.push_back(p / p.sum());
    } else {
      acts.push_back(z.cwiseMax(0.0));
    }
  }
  Eigen::VectorXd grad = acts.back();
  grad(sample.label) -= 1.0;
  std::vector<Layer> out(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    out[l].weights = grad * acts[l].transpose();
    out[l].bias = grad;
    if (l > 0) {
      grad = (layers[l].weights.transpose() * grad).cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

// Signs of every hidden pre-activation; the loss is smooth only while these
// stay fixed.
static std::vector<bool> relu_pattern(const Network& net, const LabeledSample& sample) {
  std::vector<bool> out;
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(sample.input.pixels.data(),
                                                          static_cast<Eigen::Index>(sample.input.pixels.size()));
  for (std::size_t l = 0; l + 1 < net.layers().size(); ++l) {
    const Eigen::VectorXd z = net.layers()[l].weights * a + net.layers()[l].bias;
    for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(z(i) > 0.0);
    a = z.cwiseMax(0.0);
  }
  return out;
}

double gradient_check(const Network& net, const LabeledSample& sample, std::uint64_t seed) {
  constexpr double kStep = 1e-5;
  // Gradients smaller than this are compared in absolute terms.
  constexpr double kFloor = 1e-6;

  const auto analytic = loss_gradient(net, sample);
  struct Ref {
    std::size_t layer;
    bool is_bias;
    Eigen::Index row, col;
  };
  std::vector<Ref> params;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& w = net.layers()[l].weights;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) params.push_back({l, false, r, c});
    for (Eigen::Index r = 0; r < w.rows(); ++r) params.push_back({l, true, r, 0});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(params.begin(), params.end(), rng);
  const std::size_t total = params.size();
  const std::size_t wanted = std::max((total + 99) / 100, std::min<std::size_t>(total, 50));
  params.resize(std::min(total, wanted));

  double worst = 0.0;
  Network probe = net;
  auto& layers = NetworkTrainer::layers(probe);
  for (const auto& p : params) {
    double& slot = p.is_bias ? layers[p.layer].bias(p.row) : layers[p.layer].weights(p.row, p.col);
    const double original = slot;
    slot = original + kStep;
    const double plus = sample_loss(probe, sample);
    const auto plus_pattern = relu_pattern(probe, sample);
    slot = original - kStep;
    const double minus = sample_loss(probe, sample);
    const bool kink = relu_pattern(probe, sample) != plus_pattern;
    slot = original;
    if (kink) continue;  // the step crosses a ReLU boundary
    const double numeric = (plus - minus) / (2.0 * kStep);
    const double exact = p.is_bias ? analytic[p.layer].bias(p.row) : analytic[p.layer].weights(p.row, p.col);
    const double denom = std::max({std::abs(numeric), std::abs(exact), kFloor});
    worst = std::max(worst, std::abs(numeric - exact) / denom);
  }
  return worst;
}

void write_network(textio::Writer& w, const Network& net) {
  w.integer(kNetworkMagic, kNetworkVersion);
  const auto& a = net.arch();
  w.unsigned_integer("input_dim", a.input_dim);
  std::string hidden = std::to_string(a.hidden.size());
  for (std::size_t h : a.hidden) hidden += " " + std::to_string(h);
  w.line("hidden", hidden);
  w.unsigned_integer("feature_layer", a.feature_layer);
  w.unsigned_integer("num_classes", a.num_classes);
  w.unsigned_integer("frozen_layers", net.frozen_layers());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    w.matrix("W" + std::to_string(l), net.layers()[l].weights);
    w.vector("b" + std::to_string(l), net.layers()[l].bias);
  }
  w.line("end", "");
}

Network read_network(textio::Reader& r) {
  const auto version = r.integer(kNetworkMagic);
  if (version != kNetworkVersion) {
    throw Error(ErrorCode::VersionMismatch, "network format version " + std::to_string(version));
  }
  Network net;
  net.arch_.input_dim = r.unsigned_integer("input_dim");
  const auto hidden = r.expect("hidden");
  if (hidden.empty() || hidden.size() != textio::parse_uint(hidden[0]) + 1) r.fail("bad hidden list");
  for (std::size_t i = 1; i < hidden.size(); ++i) net.arch_.hidden.push_back(textio::parse_uint(hidden[i]));
  net.arch_.feature_layer = r.unsigned_integer("feature_layer");
  net.arch_.num_classes = r.unsigned_integer("num_classes");
  net.frozen_ = r.unsigned_integer("frozen_layers");
  try {
    net.arch_.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  std::size_t in_dim = net.arch_.input_dim;
  for (std::size_t l = 0; l <= net.arch_.hidden.size(); ++l) {
    Layer layer;
    layer.weights = r.matrix("W" + std::to_string(l));
    layer.bias = r.vector("b" + std::to_string(l));
    const std::size_t out_dim = l < net.arch_.hidden.size() ? net.arch_.hidden[l] : net.arch_.num_classes;
    if (static_cast<std::size_t>(layer.weights.rows()) != out_dim ||
        static_cast<std::size_t>(layer.weights.cols()) != in_dim ||
        static_cast<std::size_t>(layer.bias.size()) != out_dim) {
      r.fail("layer " + std::to_string(l) + " has the wrong shape");
    }
    net.layers_.push_back(std::move(layer));
    in_dim = out_dim;
  }
  r.expect("end");
  return net;
}

void save_network(const Network& net, std::ostream& out) {
  textio::Writer w(out);
  write_network(w, net);
}

Network load_network(std::istream& in) {
  textio::Reader r(in);
  return read_network(r);
}

}  // namespace activemon
