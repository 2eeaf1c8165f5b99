#include "activemon/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "activemon/error.hpp"
#include "activemon/textio.hpp"

namespace activemon {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw Error(ErrorCode::InvalidConfig,
              "key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(expected));
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  try {
    return textio::parse_real(v);
  } catch (const Error&) {
    bad_value(key, v, "a real number");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto pos = v.find(',');
    const auto item = trim(v.substr(0, pos));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return out;
}

std::string fmt_real(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename Member>
ConfigField size_field(std::string_view name, std::string_view help, Member member) {
  return {name, help,
          [member, name](RunConfig& c, std::string_view v) { c.*member = parse_unsigned<std::size_t>(name, v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

template <typename Member>
ConfigField real_field(std::string_view name, std::string_view help, Member member) {
  return {name, help, [member, name](RunConfig& c, std::string_view v) { c.*member = parse_double(name, v); },
          [member](const RunConfig& c) { return fmt_real(c.*member); }};
}

template <typename Member>
ConfigField string_field(std::string_view name, std::string_view help, Member member) {
  return {name, help, [member](RunConfig& c, std::string_view v) { c.*member = std::string(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

template <typename Member>
ConfigField bool_field(std::string_view name, std::string_view help, Member member) {
  return {name, help, [member, name](RunConfig& c, std::string_view v) { c.*member = parse_bool(name, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

std::vector<ConfigField> make_fields() {
  std::vector<ConfigField> f;
  f.push_back(string_field("preset", "preset the run started from (informational)", &RunConfig::preset));
  f.push_back({"source", "blob | idx | csv",
               [](RunConfig& c, std::string_view v) {
                 if (v == "blob") c.source = DataSource::blob;
                 else if (v == "idx") c.source = DataSource::idx;
                 else if (v == "csv") c.source = DataSource::csv;
                 else bad_value("source", v, "one of blob, idx, csv");
               },
               [](const RunConfig& c) {
                 return std::string(c.source == DataSource::blob ? "blob" : c.source == DataSource::idx ? "idx" : "csv");
               }});
  f.push_back(string_field("train_images", "IDX image file of the initial dataset", &RunConfig::train_images));
  f.push_back(string_field("train_labels", "IDX label file of the initial dataset", &RunConfig::train_labels));
  f.push_back(string_field("stream_images", "IDX image file of the run-time stream (optional)", &RunConfig::stream_images));
  f.push_back(string_field("stream_labels", "IDX label file of the run-time stream (optional)", &RunConfig::stream_labels));
  f.push_back(string_field("csv_path", "CSV file of the initial dataset", &RunConfig::csv_path));
  f.push_back(string_field("stream_csv", "CSV file of the run-time stream (optional)", &RunConfig::stream_csv));
  f.push_back({"known_classes", "comma-separated initially known class ids",
               [](RunConfig& c, std::string_view v) { c.known_classes = parse_class_set(v); },
               [](const RunConfig& c) { return format_class_set(c.known_classes); }});
  f.push_back(size_field("init_per_class", "initial samples per known class (0 = all)", &RunConfig::init_per_class));
  f.push_back(real_field("test_fraction", "share of the initial samples held out to measure the original model",
                         &RunConfig::test_fraction));
  f.push_back(size_field("stream_limit", "truncate the stream to this many inputs (0 = no limit)", &RunConfig::stream_limit));
  f.push_back({"stream_mode", "uniform | phased",
               [](RunConfig& c, std::string_view v) {
                 if (v == "uniform") c.stream_mode = StreamMode::uniform;
                 else if (v == "phased") c.stream_mode = StreamMode::phased;
                 else bad_value("stream_mode", v, "uniform or phased");
               },
               [](const RunConfig& c) { return std::string(c.stream_mode == StreamMode::uniform ? "uniform" : "phased"); }});
  f.push_back(size_field("blob_classes", "synthetic blobs: class count", &RunConfig::blob_classes));
  f.push_back(size_field("blob_dim", "synthetic blobs: dimension", &RunConfig::blob_dim));
  f.push_back(size_field("blob_per_class", "synthetic blobs: samples per class", &RunConfig::blob_per_class));
  f.push_back(real_field("blob_spread", "synthetic blobs: standard deviation", &RunConfig::blob_spread));
  f.push_back({"hidden", "comma-separated hidden layer widths",
               [](RunConfig& c, std::string_view v) {
                 c.hidden.clear();
                 for (auto item : split_list(v)) c.hidden.push_back(parse_unsigned<std::size_t>("hidden", item));
               },
               [](const RunConfig& c) { return join_sizes(c.hidden); }});
  f.push_back(size_field("feature_layer", "index of the monitored hidden layer", &RunConfig::feature_layer));
  f.push_back(size_field("epochs_init", "epochs of the initial training", &RunConfig::epochs_init));
  f.push_back(size_field("epochs_run", "epochs of run-time retraining", &RunConfig::epochs_run));
  f.push_back(real_field("learning_rate", "SGD learning rate", &RunConfig::learning_rate));
  f.push_back(size_field("train_batch", "SGD mini-batch size", &RunConfig::train_batch));
  f.push_back(string_field("network_path", "pre-trained network snapshot (trained from scratch when empty)",
                           &RunConfig::network_path));
  f.push_back({"strategy", "quantitative | box | softmax | random",
               [](RunConfig& c, std::string_view v) { c.strategy = parse_strategy(v); },
               [](const RunConfig& c) { return std::string(to_string(c.strategy)); }});
  f.push_back({"strategies", "comma-separated strategies for compare",
               [](RunConfig& c, std::string_view v) {
                 c.strategies.clear();
                 for (auto item : split_list(v)) c.strategies.push_back(parse_strategy(item));
               },
               [](const RunConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.strategies.size(); ++i) out += (i ? "," : "") + std::string(to_string(c.strategies[i]));
                 return out;
               }});
  f.push_back(real_field("variance_target", "PCA retained variance ratio", &RunConfig::variance_target));
  f.push_back(bool_field("use_pca", "project valuations with PCA before clustering", &RunConfig::use_pca));
  f.push_back(bool_field("dynamic_threshold", "adapt distance thresholds at run time", &RunConfig::dynamic_threshold));
  f.push_back(size_field("k_max", "largest cluster count per class", &RunConfig::k_max));
  f.push_back(size_field("silhouette_sample", "silhouette subsample size", &RunConfig::silhouette_sample));
  f.push_back(real_field("softmax_threshold", "softmax monitor rejection threshold", &RunConfig::softmax_threshold));
  f.push_back(real_field("random_rate", "random monitor warning probability", &RunConfig::random_rate));
  f.push_back({"seed", "seed for data, stream, training and monitors",
               [](RunConfig& c, std::string_view v) { c.seed = parse_unsigned<std::uint64_t>("seed", v); },
               [](const RunConfig& c) { return std::to_string(c.seed); }});
  f.push_back(real_field("p", "query budget as a fraction of the stream length", &RunConfig::p));
  f.push_back(real_field("kappa_star", "monitor precision threshold", &RunConfig::kappa_star));
  f.push_back(real_field("n_star_fraction", "sample threshold n* as a fraction of |X|/|Y|", &RunConfig::n_star_fraction));
  f.push_back(real_field("tau_factor", "model threshold as a fraction of the original test accuracy", &RunConfig::tau_factor));
  f.push_back(size_field("batch_size", "stream batch size", &RunConfig::batch_size));
  f.push_back(size_field("eval_every", "every n-th labeled sample of a class goes to the evaluation pool",
                         &RunConfig::eval_every));
  f.push_back(size_field("min_eval_pool", "evaluation samples needed before s_network is defined", &RunConfig::min_eval_pool));
  f.push_back(size_field("authority_timeout_ms", "authority answer timeout (0 = wait forever)", &RunConfig::authority_timeout_ms));
  f.push_back(string_field("output_dir", "directory for metrics, event log and snapshots", &RunConfig::output_dir));
  f.push_back({"port", "HTTP port of the service",
               [](RunConfig& c, std::string_view v) { c.port = parse_unsigned<std::uint16_t>("port", v); },
               [](const RunConfig& c) { return std::to_string(c.port); }});
  return f;
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = make_fields();
  return fields;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& fields = config_fields();
  auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) { return f.name == key; });
  if (it == fields.end()) throw Error(ErrorCode::InvalidConfig, "unknown key '" + std::string(key) + "'");
  it->set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const {
  const auto& fields = config_fields();
  auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) { return f.name == key; });
  if (it == fields.end()) throw Error(ErrorCode::InvalidConfig, "unknown key '" + std::string(key) + "'");
  return it->get(*this);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (known_classes.empty()) fail("known_classes must not be empty");
  if (hidden.empty()) fail("hidden must list at least one layer");
  if (feature_layer >= hidden.size()) fail("feature_layer must index into hidden");
  if (!(p >= 0.0 && p <= 1.0)) fail("p must lie in [0,1]");
  if (!(kappa_star > 0.0 && kappa_star <= 1.0)) fail("kappa_star must lie in (0,1]");
  if (!(variance_target > 0.0 && variance_target <= 1.0)) fail("variance_target must lie in (0,1]");
  if (!(random_rate >= 0.0 && random_rate <= 1.0)) fail("random_rate must lie in [0,1]");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in [0,1)");
  if (batch_size == 0) fail("batch_size must be positive");
  if (train_batch == 0) fail("train_batch must be positive");
  if (k_max == 0) fail("k_max must be positive");
  if (eval_every < 2) fail("eval_every must be at least 2");
  if (n_star_fraction <= 0.0) fail("n_star_fraction must be positive");
  if (source == DataSource::idx && (train_images.empty() || train_labels.empty())) {
    fail("idx source needs train_images and train_labels");
  }
  if (source == DataSource::idx && (stream_images.empty() != stream_labels.empty())) {
    fail("stream_images and stream_labels must be given together");
  }
  if (source == DataSource::csv && csv_path.empty()) fail("csv source needs csv_path");
  if (source == DataSource::blob) {
    if (blob_classes == 0 || blob_dim == 0 || blob_per_class == 0 || !(blob_spread > 0.0)) {
      fail("blob parameters must be positive");
    }
    for (ClassId c : known_classes) {
      if (c >= blob_classes) fail("known class " + std::to_string(c) + " exceeds blob_classes");
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
  }
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& f : config_fields()) out += std::string(f.name) + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  if (name == "blob4") {
    return c;
  }
  if (name == "mnist-half") {
    c.preset = "mnist-half";
    c.source = DataSource::idx;
    c.train_images = "data/mnist/train-images-idx3-ubyte";
    c.train_labels = "data/mnist/train-labels-idx1-ubyte";
    c.stream_images = "data/mnist/t10k-images-idx3-ubyte";
    c.stream_labels = "data/mnist/t10k-labels-idx1-ubyte";
    c.known_classes = {0, 1, 2, 3, 4};
    c.init_per_class = 1000;
    c.stream_limit = 10000;
    c.hidden = {128, 40};
    c.feature_layer = 1;
    c.epochs_init = 3;
    c.epochs_run = 3;
    c.learning_rate = 0.05;
    c.train_batch = 32;
    return c;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
}

std::vector<std::string_view> preset_names() { return {"blob4", "mnist-half"}; }

std::set<ClassId> parse_class_set(std::string_view text) {
  std::set<ClassId> out;
  for (auto item : split_list(text)) {
    const auto dash = item.find('-');
    if (dash != std::string_view::npos && dash > 0) {
      const auto lo = parse_unsigned<ClassId>("known_classes", trim(item.substr(0, dash)));
      const auto hi = parse_unsigned<ClassId>("known_classes", trim(item.substr(dash + 1)));
      if (hi < lo) bad_value("known_classes", item, "an increasing range");
      for (ClassId c = lo; c <= hi; ++c) out.insert(c);
    } else {
      out.insert(parse_unsigned<ClassId>("known_classes", item));
    }
  }
  return out;
}

std::string format_class_set(const std::set<ClassId>& classes) {
  std::string out;
  for (ClassId c : classes) out += (out.empty() ? "" : ",") + std::to_string(c);
  return out;
}

}  // namespace activemon
