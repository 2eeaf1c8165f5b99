#include "activemon/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "activemon/error.hpp"

namespace activemon {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::uint32_t read_u32_be() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[offset_ + i];
    offset_ += 4;
    return v;
  }

  const unsigned char* take(std::size_t n) {
    require(n);
    const unsigned char* p = bytes_.data() + offset_;
    offset_ += n;
    return p;
  }

  std::size_t offset() const { return offset_; }

 private:
  void require(std::size_t n) const {
    if (bytes_.size() - offset_ < n) {
      throw Error(ErrorCode::TruncatedFile, path_.string() + " at offset " + std::to_string(offset_) +
                                                ": need " + std::to_string(n) + " bytes, have " +
                                                std::to_string(bytes_.size() - offset_));
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::filesystem::path& path_;
  std::size_t offset_ = 0;
};

void write_u32_be(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::string format_shortest(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<std::string> numbered_class_names(std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i));
  return names;
}

void Dataset::validate() const {
  const std::size_t dim = input_dim();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label >= num_classes()) {
      throw Error(ErrorCode::OutOfRangeValue,
                  "sample " + std::to_string(i) + " has label " + std::to_string(s.label) + " >= " +
                      std::to_string(num_classes()));
    }
    if (s.input.dim() != dim || dim == 0 ||
        static_cast<std::size_t>(s.input.width) * s.input.height * s.input.channels != dim) {
      throw Error(ErrorCode::ShapeMismatch, "sample " + std::to_string(i) + " has inconsistent shape");
    }
    for (double v : s.input.pixels) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::OutOfRangeValue, "sample " + std::to_string(i) + " has a pixel outside [0,1]");
      }
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto image_bytes = read_file(images_path);
  const auto label_bytes = read_file(labels_path);

  ByteReader images(image_bytes, images_path);
  const std::uint32_t image_magic = images.read_u32_be();
  if (image_magic != kIdxImagesMagic) {
    throw Error(ErrorCode::BadMagic, images_path.string() + " at offset 0: expected 2051, found " +
                                         std::to_string(image_magic));
  }
  const std::uint32_t n_images = images.read_u32_be();
  const std::uint32_t rows = images.read_u32_be();
  const std::uint32_t cols = images.read_u32_be();

  ByteReader labels(label_bytes, labels_path);
  const std::uint32_t label_magic = labels.read_u32_be();
  if (label_magic != kIdxLabelsMagic) {
    throw Error(ErrorCode::BadMagic, labels_path.string() + " at offset 0: expected 2049, found " +
                                         std::to_string(label_magic));
  }
  const std::uint32_t n_labels = labels.read_u32_be();
  if (n_labels != n_images) {
    throw Error(ErrorCode::CountMismatch, labels_path.string() + " at offset 4: " + std::to_string(n_labels) +
                                              " labels for " + std::to_string(n_images) + " images in " +
                                              images_path.string());
  }

  const std::size_t pixels_per_image = static_cast<std::size_t>(rows) * cols;
  Dataset d;
  d.samples.reserve(n_images);
  std::uint32_t max_label = 0;
  for (std::uint32_t i = 0; i < n_images; ++i) {
    const unsigned char* px = images.take(pixels_per_image);
    const unsigned char label = *labels.take(1);
    LabeledSample s;
    s.input.width = cols;
    s.input.height = rows;
    s.input.channels = 1;
    s.input.pixels.resize(pixels_per_image);
    for (std::size_t j = 0; j < pixels_per_image; ++j) s.input.pixels[j] = px[j] / 255.0;
    s.label = label;
    max_label = std::max<std::uint32_t>(max_label, label);
    d.samples.push_back(std::move(s));
  }
  d.class_names = numbered_class_names(n_images == 0 ? 0 : max_label + 1);
  return d;
}

void save_idx(const Dataset& d, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  std::ofstream images(images_path, std::ios::binary);
  std::ofstream labels(labels_path, std::ios::binary);
  if (!images || !labels) throw Error(ErrorCode::IoError, "cannot write IDX pair " + images_path.string());
  const std::uint32_t rows = d.empty() ? 0 : d.samples.front().input.height;
  const std::uint32_t cols = d.empty() ? 0 : d.samples.front().input.width;
  write_u32_be(images, kIdxImagesMagic);
  write_u32_be(images, static_cast<std::uint32_t>(d.size()));
  write_u32_be(images, rows);
  write_u32_be(images, cols);
  write_u32_be(labels, kIdxLabelsMagic);
  write_u32_be(labels, static_cast<std::uint32_t>(d.size()));
  for (const auto& s : d.samples) {
    if (s.input.channels != 1) throw Error(ErrorCode::ShapeMismatch, "IDX export supports grayscale only");
    for (double v : s.input.pixels) {
      images.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    labels.put(static_cast<char>(static_cast<unsigned char>(s.label)));
  }
  if (!images || !labels) throw Error(ErrorCode::IoError, "short write to " + images_path.string());
}

Dataset load_csv(const std::filesystem::path& path, const CsvLayout& layout) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": row 0, col 0: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "label") {
    throw Error(ErrorCode::ParseError, path.string() + ": row 0, col 0: header must start with 'label'");
  }
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] != "p" + std::to_string(c - 1)) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ": row 0, col " + std::to_string(c) + ": expected p" + std::to_string(c - 1));
    }
  }
  const std::size_t dim = header.size() - 1;
  const std::uint32_t channels = layout.channels;
  const std::uint32_t width = layout.width.value_or(static_cast<std::uint32_t>(dim / std::max(1u, channels)));
  const std::uint32_t height = layout.height.value_or(1);
  if (static_cast<std::size_t>(width) * height * channels != dim) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": layout does not match " + std::to_string(dim) + " columns");
  }

  Dataset d;
  std::size_t row = 0;
  ClassId max_label = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ArityMismatch, path.string() + ": row " + std::to_string(row) + " has " +
                                                 std::to_string(cells.size()) + " columns, expected " +
                                                 std::to_string(header.size()));
    }
    LabeledSample s;
    auto [lp, lec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), s.label);
    if (lec != std::errc() || lp != cells[0].data() + cells[0].size()) {
      throw Error(ErrorCode::ParseError, path.string() + ": row " + std::to_string(row) + ", col 0");
    }
    s.input.width = width;
    s.input.height = height;
    s.input.channels = channels;
    s.input.pixels.resize(dim);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v);
      if (ec != std::errc() || p != cells[c].data() + cells[c].size()) {
        throw Error(ErrorCode::ParseError, path.string() + ": row " + std::to_string(row) + ", col " + std::to_string(c));
      }
      if (v < -1e-9 || v > 1.0 + 1e-9) {
        throw Error(ErrorCode::OutOfRangeValue,
                    path.string() + ": row " + std::to_string(row) + ", col " + std::to_string(c) + " = " + std::string(cells[c]));
      }
      s.input.pixels[c - 1] = std::clamp(v, 0.0, 1.0);
    }
    max_label = std::max(max_label, s.label);
    d.samples.push_back(std::move(s));
  }
  const std::size_t inferred = d.empty() ? 0 : static_cast<std::size_t>(max_label) + 1;
  const std::size_t n_classes = layout.num_classes.value_or(inferred);
  if (n_classes < inferred) {
    throw Error(ErrorCode::OutOfRangeValue, path.string() + ": label " + std::to_string(max_label) +
                                                 " exceeds declared class count " + std::to_string(n_classes));
  }
  d.class_names = numbered_class_names(n_classes);
  return d;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const std::size_t dim = d.input_dim();
  out << "label";
  for (std::size_t c = 0; c < dim; ++c) out << ",p" << c;
  out << '\n';
  for (const auto& s : d.samples) {
    out << s.label;
    for (double v : s.input.pixels) out << ',' << format_shortest(v);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

KnownUnknownSplit split_known_unknown(const Dataset& d, const std::set<ClassId>& known) {
  if (known.empty()) throw Error(ErrorCode::EmptyKnownSet, "known class set is empty");
  for (ClassId c : known) {
    if (c >= d.num_classes()) {
      throw Error(ErrorCode::OutOfRangeValue, "known class " + std::to_string(c) + " not in dataset");
    }
  }
  KnownUnknownSplit out;
  for (ClassId c : known) {
    out.original_to_dense[c] = static_cast<ClassId>(out.dense_to_original.size());
    out.dense_to_original.push_back(c);
    out.known.class_names.push_back(d.class_names[c]);
  }
  out.unknown.class_names = d.class_names;
  for (const auto& s : d.samples) {
    if (auto it = out.original_to_dense.find(s.label); it != out.original_to_dense.end()) {
      out.known.samples.push_back({s.input, it->second});
    } else {
      out.unknown.samples.push_back(s);
    }
  }
  return out;
}

Dataset make_synthetic_blobs(std::size_t num_classes, std::size_t dim, std::size_t samples_per_class,
                             double spread, std::uint64_t seed) {
  // Means: scaled simplex (one axis per class) when it fits, else a grid.
  // Both give a minimum pairwise mean distance of `separation`.
  const double separation = 8.0 * spread;
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
  if (num_classes <= dim) {
    for (std::size_t c = 0; c < num_classes; ++c) means[c][c] = separation / std::sqrt(2.0);
  } else {
    std::size_t side = 2;
    while (std::pow(static_cast<double>(side), static_cast<double>(dim)) < static_cast<double>(num_classes)) ++side;
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::size_t rest = c;
      for (std::size_t j = 0; j < dim; ++j) {
        means[c][j] = static_cast<double>(rest % side) * separation;
        rest /= side;
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<std::vector<double>> raw;
  std::vector<ClassId> labels;
  raw.reserve(num_classes * samples_per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < samples_per_class; ++i) {
      std::vector<double> v(dim);
      for (std::size_t j = 0; j < dim; ++j) v[j] = means[c][j] + noise(rng);
      raw.push_back(std::move(v));
      labels.push_back(static_cast<ClassId>(c));
    }
  }

  double lo = 0.0;
  double hi = 1.0;
  if (!raw.empty()) {
    lo = hi = raw.front().front();
    for (const auto& v : raw) {
      for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;

  Dataset d;
  d.class_names = numbered_class_names(num_classes);
  d.samples.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    LabeledSample s;
    s.label = labels[i];
    s.input.width = static_cast<std::uint32_t>(dim);
    s.input.height = 1;
    s.input.channels = 1;
    s.input.pixels.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) s.input.pixels[j] = std::clamp((raw[i][j] - lo) / range, 0.0, 1.0);
    d.samples.push_back(std::move(s));
  }
  return d;
}

StreamSpec shuffle_stream(const Dataset& d, std::uint64_t seed, std::size_t batch_size) {
  StreamSpec s;
  s.seed = seed;
  s.batch_size = batch_size;
  s.order.resize(d.size());
  std::iota(s.order.begin(), s.order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(s.order.begin(), s.order.end(), rng);
  return s;
}

StreamSpec phased_stream(const Dataset& d, const std::set<ClassId>& known, std::uint64_t seed,
                         std::size_t batch_size) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> known_idx;
  std::map<ClassId, std::vector<std::size_t>> novel_idx;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const ClassId y = d.samples[i].label;
    if (known.count(y)) {
      known_idx.push_back(i);
    } else {
      novel_idx[y].push_back(i);
    }
  }
  std::shuffle(known_idx.begin(), known_idx.end(), rng);

  const std::size_t phases = std::max<std::size_t>(1, novel_idx.size());
  std::vector<std::vector<std::size_t>> segments(phases);
  for (std::size_t i = 0; i < known_idx.size(); ++i) segments[i * phases / known_idx.size()].push_back(known_idx[i]);
  std::size_t phase = 0;
  for (auto& [cls, idx] : novel_idx) {
    segments[phase].insert(segments[phase].end(), idx.begin(), idx.end());
    ++phase;
  }

  StreamSpec s;
  s.seed = seed;
  s.batch_size = batch_size;
  for (auto& seg : segments) {
    std::shuffle(seg.begin(), seg.end(), rng);
    s.order.insert(s.order.end(), seg.begin(), seg.end());
  }
  return s;
}

std::uint64_t stream_hash(const StreamSpec& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t idx : s.order) {
    for (int b = 0; b < 8; ++b) {
      h ^= (static_cast<std::uint64_t>(idx) >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace activemon
