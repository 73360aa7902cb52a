#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "awb/error.hpp"
#include "awb/image_io.hpp"
#include "awb/rng.hpp"
#include "awb/tensor.hpp"

namespace awb::data {

enum class Split { None, Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::None: return "none";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "none";
}

inline Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  if (name == "none") return Split::None;
  throw Error(ErrorKind::WrongSplit, "unknown split '" + name + "'");
}

struct Sample {
  std::string path;
  int label = 0;
  Split split = Split::None;
};

/// Labelled sample catalogue. Class indices follow lexicographic directory
/// order, which places fake=0 / real=1 when those names are used.
struct DatasetManifest {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  std::string root;

  std::vector<size_t> split_indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == s) out.push_back(i);
    return out;
  }

  size_t class_count(int label) const {
    size_t n = 0;
    for (const auto& s : samples) n += (s.label == label);
    return n;
  }
};

/// Per-channel pixel statistics over a split, in [0,1] units.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-6;

// ---------------------------------------------------------------------------
// Discovery

inline bool has_image_extension(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

/// Scans `<root>/<class_name>/*.{png,ppm,pgm}` into a manifest with
/// deterministic (lexicographic) class and file ordering.
inline DatasetManifest scan_dataset(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec))
    throw Error(ErrorKind::UnreadableDirectory,
                "dataset root " + root.string() + " is not a readable directory");
  std::vector<std::string> class_names;
  for (const auto& entry : std::filesystem::directory_iterator(root, ec)) {
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  }
  if (ec)
    throw Error(ErrorKind::UnreadableDirectory,
                "cannot list " + root.string() + ": " + ec.message());
  std::sort(class_names.begin(), class_names.end());
  if (class_names.size() < 2)
    throw Error(ErrorKind::EmptyClass,
                "dataset root " + root.string() +
                    " needs at least two class directories");

  DatasetManifest manifest;
  manifest.root = root.string();
  manifest.class_names = class_names;
  for (size_t label = 0; label < class_names.size(); ++label) {
    auto class_dir = root / class_names[label];
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(class_dir, ec)) {
      if (entry.is_regular_file() && has_image_extension(entry.path()))
        files.push_back(entry.path().string());
    }
    if (ec)
      throw Error(ErrorKind::UnreadableDirectory,
                  "cannot list " + class_dir.string() + ": " + ec.message());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw Error(ErrorKind::EmptyClass,
                  "class directory " + class_dir.string() + " has no images");
    for (auto& f : files)
      manifest.samples.push_back({std::move(f), static_cast<int>(label),
                                  Split::None});
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Splits and folds

/// Stratified split: per class, shuffle with the seeded generator, give
/// floor(n * ratio) samples to val and test, the remainder to train.
inline DatasetManifest split_dataset(const DatasetManifest& manifest,
                                     std::array<double, 3> ratios,
                                     uint64_t seed) {
  for (double r : ratios)
    if (r <= 0.0)
      throw Error(ErrorKind::InvalidConfig, "split ratios must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw Error(ErrorKind::InvalidConfig, "split ratios must sum to 1");

  DatasetManifest out = manifest;
  size_t num_classes = manifest.class_names.size();
  Rng rng(seed);
  for (size_t label = 0; label < num_classes; ++label) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < out.samples.size(); ++i)
      if (out.samples[i].label == static_cast<int>(label)) idx.push_back(i);
    if (idx.size() < 3)
      throw Error(ErrorKind::TooFewSamples,
                  "class " + manifest.class_names[label] + " has " +
                      std::to_string(idx.size()) +
                      " samples; need at least 3 to split");
    rng.shuffle(idx);
    size_t n = idx.size();
    size_t n_val = static_cast<size_t>(std::floor(n * ratios[1]));
    size_t n_test = static_cast<size_t>(std::floor(n * ratios[2]));
    size_t n_train = n - n_val - n_test;
    for (size_t i = 0; i < n; ++i) {
      Split s = i < n_train               ? Split::Train
                : i < n_train + n_val     ? Split::Val
                                          : Split::Test;
      out.samples[idx[i]].split = s;
    }
  }
  // every class must still be present in train
  for (size_t label = 0; label < num_classes; ++label) {
    bool found = false;
    for (const auto& s : out.samples)
      if (s.label == static_cast<int>(label) && s.split == Split::Train)
        found = true;
    if (!found)
      throw Error(ErrorKind::TooFewSamples,
                  "class " + manifest.class_names[label] +
                      " ended up empty in the train split");
  }
  return out;
}

/// Stratified k folds; per class, fold sizes differ by at most one, with the
/// extra samples going to the lowest-index folds.
inline std::vector<std::vector<size_t>> kfold(const DatasetManifest& manifest,
                                              size_t k, uint64_t seed) {
  if (k < 2)
    throw Error(ErrorKind::InvalidK, "k must be >= 2, got " + std::to_string(k));
  std::vector<std::vector<size_t>> folds(k);
  Rng rng(seed);
  for (size_t label = 0; label < manifest.class_names.size(); ++label) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < manifest.samples.size(); ++i)
      if (manifest.samples[i].label == static_cast<int>(label))
        idx.push_back(i);
    if (idx.size() < k)
      throw Error(ErrorKind::InvalidK,
                  "class " + manifest.class_names[label] + " has " +
                      std::to_string(idx.size()) + " samples for k=" +
                      std::to_string(k));
    rng.shuffle(idx);
    size_t base = idx.size() / k, extra = idx.size() % k;
    size_t pos = 0;
    for (size_t f = 0; f < k; ++f) {
      size_t len = base + (f < extra ? 1 : 0);
      for (size_t i = 0; i < len; ++i) folds[f].push_back(idx[pos++]);
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// ---------------------------------------------------------------------------
// Statistics and normalization

/// Per-channel mean / standard deviation (population) over every pixel of the
/// chosen split, in one pass over the files in manifest order.
inline NormStats compute_stats(const DatasetManifest& manifest,
                               Split split = Split::Train) {
  auto idx = manifest.split_indices(split);
  if (idx.empty())
    throw Error(ErrorKind::EmptySplit,
                std::string("split '") + split_name(split) + "' is empty");
  std::vector<double> sum, sumsq;
  std::vector<int64_t> count;
  int64_t channels = -1;
  for (size_t i : idx) {
    Tensor img = load_image(manifest.samples[i].path);
    int64_t C = img.shape()[0], plane = img.shape()[1] * img.shape()[2];
    if (channels == -1) {
      channels = C;
      sum.assign(C, 0.0);
      sumsq.assign(C, 0.0);
      count.assign(C, 0);
    } else if (C != channels) {
      throw Error(ErrorKind::ShapeMismatch,
                  manifest.samples[i].path + " has " + std::to_string(C) +
                      " channels, expected " + std::to_string(channels));
    }
    auto v = img.values();
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0, s2 = 0.0;
      const double* p = v.data() + c * plane;
      for (int64_t j = 0; j < plane; ++j) {
        s += p[j];
        s2 += p[j] * p[j];
      }
      sum[c] += s;
      sumsq[c] += s2;
      count[c] += plane;
    }
  }
  NormStats stats;
  stats.mean.resize(channels);
  stats.std.resize(channels);
  for (int64_t c = 0; c < channels; ++c) {
    double m = sum[c] / count[c];
    double var = std::max(0.0, sumsq[c] / count[c] - m * m);
    stats.mean[c] = m;
    stats.std[c] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

/// (pixel - mean_c) / std_c per channel.
inline Tensor normalize(const Tensor& image, const NormStats& stats) {
  if (image.shape().size() != 3 ||
      image.shape()[0] != static_cast<int64_t>(stats.mean.size()))
    throw Error(ErrorKind::ShapeMismatch,
                "normalize: image " + shape_str(image.shape()) + " vs " +
                    std::to_string(stats.mean.size()) + " channel stats");
  const int64_t C = image.shape()[0], plane = image.shape()[1] * image.shape()[2];
  std::vector<double> out(image.numel());
  auto v = image.values();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t j = 0; j < plane; ++j)
      out[c * plane + j] = (v[c * plane + j] - stats.mean[c]) / stats.std[c];
  return Tensor(image.shape(), std::move(out));
}

inline Tensor denormalize(const Tensor& image, const NormStats& stats) {
  if (image.shape().size() != 3 ||
      image.shape()[0] != static_cast<int64_t>(stats.mean.size()))
    throw Error(ErrorKind::ShapeMismatch, "denormalize: channel mismatch");
  const int64_t C = image.shape()[0], plane = image.shape()[1] * image.shape()[2];
  std::vector<double> out(image.numel());
  auto v = image.values();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t j = 0; j < plane; ++j)
      out[c * plane + j] = v[c * plane + j] * stats.std[c] + stats.mean[c];
  return Tensor(image.shape(), std::move(out));
}

// ---------------------------------------------------------------------------
// Manifest CSV (`path,label,split`, LF line endings)

inline void write_manifest_csv(const DatasetManifest& manifest,
                               const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "path,label,split\n";
  for (const auto& s : manifest.samples)
    out << s.path << "," << s.label << "," << split_name(s.split) << "\n";
  if (!out)
    throw Error(ErrorKind::IoError, "short write to " + path.string());
}

/// Reads a manifest CSV; class names are reconstructed from label indices
/// and the optional class list (labels must be dense starting at 0).
inline DatasetManifest read_manifest_csv(const std::filesystem::path& path,
                                         std::vector<std::string> class_names = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "path,label,split")
    throw Error(ErrorKind::DecodeError,
                path.string() + ": expected manifest header 'path,label,split'");
  DatasetManifest manifest;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto second_comma = line.rfind(',');
    auto first_comma = second_comma == std::string::npos
                           ? std::string::npos
                           : line.rfind(',', second_comma - 1);
    if (first_comma == std::string::npos || second_comma == std::string::npos)
      throw Error(ErrorKind::DecodeError,
                  path.string() + ": malformed manifest row: " + line);
    Sample s;
    s.path = line.substr(0, first_comma);
    try {
      s.label = std::stoi(line.substr(first_comma + 1,
                                      second_comma - first_comma - 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::DecodeError,
                  path.string() + ": bad label in row: " + line);
    }
    s.split = parse_split(line.substr(second_comma + 1));
    max_label = std::max(max_label, s.label);
    manifest.samples.push_back(std::move(s));
  }
  if (manifest.samples.empty())
    throw Error(ErrorKind::EmptyDataset, path.string() + " lists no samples");
  if (!class_names.empty()) {
    manifest.class_names = std::move(class_names);
  } else {
    for (int i = 0; i <= max_label; ++i)
      manifest.class_names.push_back("class" + std::to_string(i));
  }
  if (static_cast<int>(manifest.class_names.size()) <= max_label)
    throw Error(ErrorKind::LabelOutOfRange,
                path.string() + ": label exceeds class list");
  return manifest;
}

}  // namespace awb::data
