#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace activemon {

using ClassId = std::uint32_t;

// One raw input. Pixels are stored row-major, channel-last, in [0,1].
struct InputSample {
  std::vector<double> pixels;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 1;

  std::size_t dim() const { return pixels.size(); }
  bool operator==(const InputSample&) const = default;
};

struct LabeledSample {
  InputSample input;
  ClassId label = 0;

  bool operator==(const LabeledSample&) const = default;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t input_dim() const { return samples.empty() ? 0 : samples.front().input.dim(); }

  // Throws Error if an invariant is violated (label range, pixel range, shape).
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

// Default class vocabulary "0", "1", ..., "n-1".
std::vector<std::string> numbered_class_names(std::size_t n);

// ---- IDX ------------------------------------------------------------------

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Writes a dataset as an IDX image/label pair. Pixels are quantized to
// round(255 * v); grayscale only.
void save_idx(const Dataset& d, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

// ---- CSV ------------------------------------------------------------------

struct CsvLayout {
  // When unset, samples are shaped as a 1 x D single-channel strip.
  std::optional<std::uint32_t> width;
  std::optional<std::uint32_t> height;
  std::uint32_t channels = 1;
  // Overrides max-label + 1 inference when set.
  std::optional<std::size_t> num_classes;
};

Dataset load_csv(const std::filesystem::path& path, const CsvLayout& layout = {});

// Canonical formatting: shortest round-trip decimal for every pixel.
void save_csv(const Dataset& d, const std::filesystem::path& path);

// ---- splitting / generation ----------------------------------------------

struct KnownUnknownSplit {
  Dataset known;    // labels re-indexed densely in increasing original-id order
  Dataset unknown;  // original labels
  // dense index -> original class id
  std::vector<ClassId> dense_to_original;
  std::map<ClassId, ClassId> original_to_dense;
};

KnownUnknownSplit split_known_unknown(const Dataset& d, const std::set<ClassId>& known);

// Gaussian blobs with class means on a scaled grid so neighbouring means
// are at least 6 * spread apart before the affine squash into [0,1].
Dataset make_synthetic_blobs(std::size_t num_classes, std::size_t dim, std::size_t samples_per_class,
                             double spread, std::uint64_t seed);

// ---- streams --------------------------------------------------------------

struct StreamSpec {
  std::vector<std::size_t> order;  // permutation of sample indices
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;

  std::size_t size() const { return order.size(); }
};

StreamSpec shuffle_stream(const Dataset& d, std::uint64_t seed, std::size_t batch_size = 128);

// Phase-based stream: the novel classes appear one after another, each in its
// own segment, with the known-class samples spread evenly over all segments.
StreamSpec phased_stream(const Dataset& d, const std::set<ClassId>& known, std::uint64_t seed,
                         std::size_t batch_size = 128);

// FNV-1a over the order; used to show that strategies share one stream.
std::uint64_t stream_hash(const StreamSpec& s);

}  // namespace activemon
