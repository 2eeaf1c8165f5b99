#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "activemon/data.hpp"
#include "activemon/monitors.hpp"

namespace activemon {

enum class DataSource { blob, idx, csv };
enum class StreamMode { uniform, phased };

// Every knob of a run. The flat `key = value` file format, the CLI flags and
// the printed resolved configuration all go through config_fields().
struct RunConfig {
  std::string preset = "blob4";

  // data
  DataSource source = DataSource::blob;
  std::string train_images;
  std::string train_labels;
  std::string stream_images;  // optional separate stream files
  std::string stream_labels;
  std::string csv_path;
  std::string stream_csv;
  std::set<ClassId> known_classes{0, 1};
  std::size_t init_per_class = 200;  // 0 = every known-class sample
  double test_fraction = 0.2;
  std::size_t stream_limit = 0;  // 0 = whole stream
  StreamMode stream_mode = StreamMode::uniform;
  std::size_t blob_classes = 4;
  std::size_t blob_dim = 8;
  std::size_t blob_per_class = 400;
  double blob_spread = 0.05;

  // network
  std::vector<std::size_t> hidden{32, 16};
  std::size_t feature_layer = 0;
  std::size_t epochs_init = 30;
  std::size_t epochs_run = 30;
  double learning_rate = 0.05;
  std::size_t train_batch = 16;
  std::string network_path;  // pre-trained snapshot; trained from scratch when empty

  // monitoring
  Strategy strategy = Strategy::quantitative;
  std::vector<Strategy> strategies{Strategy::quantitative, Strategy::box, Strategy::softmax, Strategy::random};
  double variance_target = 0.99;
  bool use_pca = true;
  bool dynamic_threshold = true;
  std::size_t k_max = 5;
  std::size_t silhouette_sample = 1000;
  double softmax_threshold = 0.9;
  double random_rate = 0.05;

  // framework
  std::uint64_t seed = 1;
  double p = 0.05;  // budget fraction of the stream length
  double kappa_star = 0.9;
  double n_star_fraction = 0.05;
  double tau_factor = 0.95;
  std::size_t batch_size = 128;
  std::size_t eval_every = 5;     // every eval_every-th labeled sample of a class is held out
  std::size_t min_eval_pool = 20;
  std::size_t authority_timeout_ms = 0;  // 0 = wait forever

  // output / service
  std::string output_dir = "out";
  std::uint16_t port = 8080;

  // Throws Error(InvalidConfig) on unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  void validate() const;

  // `key = value` lines, '#' comments.
  void load_file(const std::filesystem::path& path);
  // Every key, one `key = value` line each, in a fixed order.
  std::string resolved() const;
};

struct ConfigField {
  std::string_view name;
  std::string_view help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigField>& config_fields();

// Named starting points: "blob4" and "mnist-half".
RunConfig preset_config(std::string_view name);
std::vector<std::string_view> preset_names();

std::set<ClassId> parse_class_set(std::string_view text);
std::string format_class_set(const std::set<ClassId>& classes);

}  // namespace activemon
