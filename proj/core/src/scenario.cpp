#include "activemon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "activemon/error.hpp"

namespace activemon {

namespace {

constexpr std::uint64_t kSelectSalt = 0x5C3A9E1D2B7F4061ULL;
constexpr std::uint64_t kLimitSalt = 0xA1B2C3D4E5F60718ULL;

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.class_names = d.class_names;
  out.samples.reserve(idx.size());
  for (std::size_t i : idx) out.samples.push_back(d.samples[i]);
  return out;
}

}  // namespace

SourceData load_source(const RunConfig& c) {
  SourceData s;
  switch (c.source) {
    case DataSource::blob:
      s.pool = make_synthetic_blobs(c.blob_classes, c.blob_dim, c.blob_per_class, c.blob_spread, c.seed);
      break;
    case DataSource::idx:
      s.pool = load_idx(c.train_images, c.train_labels);
      if (!c.stream_images.empty()) s.stream = load_idx(c.stream_images, c.stream_labels);
      break;
    case DataSource::csv:
      s.pool = load_csv(c.csv_path);
      if (!c.stream_csv.empty()) s.stream = load_csv(c.stream_csv);
      break;
  }
  return s;
}

Scenario prepare_scenario(const RunConfig& config) {
  config.validate();
  SourceData src = load_source(config);
  const Dataset& pool = src.pool;
  if (pool.empty()) throw Error(ErrorCode::EmptyDataset, "initial data source is empty");

  Scenario sc;
  sc.class_names = pool.class_names;
  if (src.stream.num_classes() > sc.class_names.size()) sc.class_names = src.stream.class_names;
  for (ClassId k : config.known_classes) {
    if (k >= sc.class_names.size()) {
      throw Error(ErrorCode::InvalidConfig, "known class " + std::to_string(k) + " is outside the vocabulary of " +
                                                std::to_string(sc.class_names.size()) + " classes");
    }
  }
  sc.initial_classes.assign(config.known_classes.begin(), config.known_classes.end());
  std::map<ClassId, ClassId> dense;
  for (std::size_t i = 0; i < sc.initial_classes.size(); ++i) dense[sc.initial_classes[i]] = static_cast<ClassId>(i);

  std::mt19937_64 rng(config.seed ^ kSelectSalt);
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool.samples[i].label].push_back(i);

  std::vector<bool> taken(pool.size(), false);
  std::vector<std::size_t> train_idx, test_idx;
  for (ClassId k : sc.initial_classes) {
    auto& idx = by_class[k];
    if (idx.empty()) throw Error(ErrorCode::EmptyDataset, "no samples of known class " + std::to_string(k));
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = config.init_per_class == 0 ? idx.size() : std::min(config.init_per_class, idx.size());
    const auto n_test = static_cast<std::size_t>(std::floor(config.test_fraction * static_cast<double>(n)));
    for (std::size_t j = 0; j < n; ++j) {
      taken[idx[j]] = true;
      (j < n_test ? test_idx : train_idx).push_back(idx[j]);
    }
  }
  if (train_idx.empty()) throw Error(ErrorCode::EmptyDataset, "no initial training samples");
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto densify = [&](const std::vector<std::size_t>& idx) {
    Dataset d;
    for (ClassId k : sc.initial_classes) d.class_names.push_back(sc.class_names[k]);
    for (std::size_t i : idx) d.samples.push_back({pool.samples[i].input, dense.at(pool.samples[i].label)});
    return d;
  };
  sc.train = densify(train_idx);
  sc.test = densify(test_idx);
  sc.train_source = train_idx;

  Dataset stream;
  if (!src.stream.empty()) {
    stream = std::move(src.stream);
  } else {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!taken[i]) rest.push_back(i);
    }
    stream = subset(pool, rest);
  }
  stream.class_names = sc.class_names;
  if (config.stream_limit > 0 && config.stream_limit < stream.size()) {
    std::vector<std::size_t> idx(stream.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 lrng(config.seed ^ kLimitSalt);
    std::shuffle(idx.begin(), idx.end(), lrng);
    idx.resize(config.stream_limit);
    std::sort(idx.begin(), idx.end());
    stream = subset(stream, idx);
  }
  if (!stream.empty() && stream.input_dim() != pool.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "stream inputs have dimension " + std::to_string(stream.input_dim()) +
                                              ", initial data " + std::to_string(pool.input_dim()));
  }
  sc.stream = std::move(stream);
  sc.order = config.stream_mode == StreamMode::uniform
                 ? shuffle_stream(sc.stream, config.seed, config.batch_size)
                 : phased_stream(sc.stream, config.known_classes, config.seed, config.batch_size);
  return sc;
}

}  // namespace activemon
