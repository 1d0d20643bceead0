#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oct1d/tensor.hpp"

namespace oct1d {

/// One split of a univariate dataset in (N, Q, 1) layout.
struct SeriesSplit {
  Tensor x;                          // (N, Q, 1), padding positions hold 0
  std::vector<std::size_t> labels;   // class indices 0..K-1
  std::vector<std::size_t> lengths;  // original length before tail padding
  std::vector<std::uint8_t> valid;   // (N * Q) mask, 1 for observed values

  std::size_t size() const noexcept { return labels.size(); }
};

struct SeriesDataset {
  std::string name;
  SeriesSplit train;
  SeriesSplit test;
  std::vector<double> label_map;  // label_map[k] = original label of class k

  std::size_t num_classes() const noexcept { return label_map.size(); }
  std::size_t length() const { return train.x.dim(1); }
};

/// One parsed TSV row before normalization and padding.
struct RawSeries {
  double label = 0.0;
  std::vector<double> values;  // NaN marks a missing observation
};

std::vector<RawSeries> parse_ucr_tsv(const std::filesystem::path& path);

/// Parses both splits, z-normalizes every series over its observed positions
/// (unless `normalize` is false) and pads to the longest series of either
/// split. Labels are remapped to 0..K-1 in ascending order of the original
/// training labels; a test label unseen in training is an input error.
SeriesDataset load_ucr_tsv(const std::filesystem::path& train_path,
                           const std::filesystem::path& test_path, std::string name = {},
                           bool normalize = true);

/// Writes a split back in UCR TSV form using the original labels.
void write_ucr_tsv(const std::filesystem::path& path, const SeriesSplit& split,
                   const std::vector<double>& label_map);

/// Per-series z-normalization with population standard deviation over the
/// positions where `valid` is set. Series with std < 1e-8 map to zeros;
/// invalid positions are set to 0.
void z_normalize(std::span<double> series, std::span<const std::uint8_t> valid);
std::vector<double> z_normalize(std::vector<double> series);

enum class ToyKind { Sine, Square, NoiseTrend };

std::string_view toy_kind_name(ToyKind kind) noexcept;

/// Three-class synthetic dataset with `n_per_class` series per class in each
/// split, Gaussian noise of standard deviation `noise`, z-normalized.
///   sine / square: 1, 2 or 4 cycles per series, random phase and amplitude
///   noise-trend:   flat, rising or falling ramp of random slope
SeriesDataset synth_toy(ToyKind kind, std::size_t n_per_class, std::size_t length,
                        std::uint64_t seed, double noise = 0.3);

/// Resolves a dataset reference:
///   synth:<kind>:<n_per_class>:<Q>:<seed>[:<noise>]
///   <name>  ->  <data_dir>/<name>/<name>_TRAIN.tsv and _TEST.tsv
SeriesDataset load_dataset(std::string_view uri, const std::filesystem::path& data_dir);

/// Data directory from OCT1D_DATA_DIR, defaulting to "data".
std::filesystem::path default_data_dir();

}  // namespace oct1d
