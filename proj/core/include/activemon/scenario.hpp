#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "activemon/config.hpp"
#include "activemon/data.hpp"

namespace activemon {

// Everything a run needs from the data side, derived deterministically from
// a RunConfig (including its seed).
struct Scenario {
  Dataset train;  // initial known-class data, dense labels
  Dataset test;   // held out from `train`, dense labels
  std::vector<ClassId> initial_classes;  // dense index -> original class id
  // Indices of the train samples in the source pool; written into snapshots
  // instead of the pixels.
  std::vector<std::size_t> train_source;
  Dataset stream;  // original labels, full vocabulary
  StreamSpec order;
  std::vector<std::string> class_names;  // full vocabulary

  std::size_t vocabulary_size() const { return class_names.size(); }
};

Scenario prepare_scenario(const RunConfig& config);

// Loads the (pool, stream) pair named by the config. `stream` is empty when
// the stream is carved out of the pool.
struct SourceData {
  Dataset pool;
  Dataset stream;
};
SourceData load_source(const RunConfig& config);

}  // namespace activemon
