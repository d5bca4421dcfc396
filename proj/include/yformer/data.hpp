#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "yformer/tensor.hpp"

namespace yformer {

// Uniformly spaced multichannel series. Columns are column-major so a
// channel is contiguous.
struct RawSeries {
  std::vector<int64_t> timestamps;  // epoch seconds, strictly increasing
  std::vector<std::string> channel_names;
  std::vector<std::vector<real>> columns;
  int64_t spacing_seconds = 0;

  int64_t rows() const { return static_cast<int64_t>(timestamps.size()); }
  int64_t channels() const { return static_cast<int64_t>(columns.size()); }
  int64_t channel_index(const std::string& name) const;  // -1 when absent
};

struct IngestOptions {
  bool forward_fill = false;  // fill empty cells from the previous row
};

// First column must be a datetime named "date" formatted
// YYYY-MM-DD HH:MM:SS; remaining columns numeric. Rejects timestamp gaps.
RawSeries ingest_csv(const std::string& path, const IngestOptions& opts = {});

void write_csv(const RawSeries& series, const std::string& path);

// ---- calendar helpers ----

struct CalendarFields {
  int year, month, day, weekday /* Monday=0 */, hour, minute, second;
};
CalendarFields civil_from_epoch(int64_t epoch_seconds);
int64_t epoch_from_civil(int year, int month, int day, int hour = 0,
                         int minute = 0, int second = 0);
// Same day-of-month and time-of-day n months later (day clamped to month end).
int64_t add_months(int64_t epoch_seconds, int months);
std::string format_timestamp(int64_t epoch_seconds);

// 4 features for hourly data (month, day, weekday, hour), 5 with the minute
// slot for sub-hourly; each affinely mapped to [-0.5, 0.5].
int64_t time_feature_count(int64_t spacing_seconds);
void time_feature_row(int64_t ts, int64_t spacing_seconds, real* out);
// (1, n, F) tensor for a run of instants.
Tensor time_features(std::span<const int64_t> timestamps,
                     int64_t spacing_seconds);

// ---- splits ----

struct SplitSpec {
  enum class Mode { months, fractions };
  Mode mode = Mode::months;
  double train = 12, val = 4, test = 4;
};

struct RowRange {
  int64_t begin = 0, end = 0;
  int64_t size() const { return end - begin; }
};

struct SplitRanges {
  RowRange train, val, test;
};

// Month mode counts calendar months from the first timestamp; windows never
// straddle the resulting boundaries.
SplitRanges split_rows(const RawSeries& series, const SplitSpec& spec);

// ---- standardization ----

struct StandardizeStats {
  std::vector<double> mean, stddev;  // per channel, train rows only
};

StandardizeStats compute_stats(const RawSeries& series, int64_t train_end_row);
void standardize_inplace(RawSeries& series, const StandardizeStats& stats);
double destandardize_value(const StandardizeStats& stats, int64_t channel,
                           double v);

// ---- windowing ----

struct WindowSpec {
  int64_t history_len = 48;  // T
  int64_t horizon = 24;      // tau
  int64_t stride = 1;
  std::vector<int64_t> target_channels;
  std::vector<int64_t> predictor_channels;  // past covariates
  bool future_covariates_known = false;     // x' carries the covariates too
  // Lengths fed to the model are left-padded (repeat-first-value) up to the
  // next multiple of this divisor; 1 = no padding.
  int64_t divisor = 1;
};

struct TimeSeriesInstance {
  Tensor x;      // (1, T', M)
  Tensor y;      // (1, T', O)
  Tensor x_fut;  // (1, tau', M_fut)
  Tensor y_fut;  // (1, tau', O)
  Tensor past_time, future_time;
};

class WindowedDataset {
 public:
  WindowedDataset(std::shared_ptr<const RawSeries> series, RowRange range,
                  WindowSpec spec);

  int64_t size() const { return count_; }
  int64_t padded_history() const { return padded_history_; }
  int64_t padded_horizon() const { return padded_horizon_; }
  int64_t pad_history() const { return padded_history_ - spec_.history_len; }
  int64_t pad_horizon() const { return padded_horizon_ - spec_.horizon; }
  const WindowSpec& spec() const { return spec_; }

  TimeSeriesInstance instance(int64_t i) const;

  struct Batch {
    Tensor past_values;  // (N, T', M+O)
    Tensor past_time;
    Tensor future_values;  // (N, tau', M_fut)
    Tensor future_time;
    Tensor y_past;  // (N, T', O)
    Tensor y_fut;   // (N, tau', O)
  };
  Batch make_batch(std::span<const int64_t> ids) const;

 private:
  std::shared_ptr<const RawSeries> series_;
  RowRange range_;
  WindowSpec spec_;
  int64_t count_ = 0;
  int64_t padded_history_ = 0, padded_horizon_ = 0;
};

struct DataSplits {
  WindowedDataset train, val, test;
};

DataSplits make_windows(std::shared_ptr<const RawSeries> series,
                        const SplitRanges& ranges, const WindowSpec& spec);

// ---- synthetic generator ----

enum class SynthKind { sum_of_sines, trend_season, random_walk };
SynthKind synth_kind_from_string(const std::string& s);
std::string to_string(SynthKind kind);

// Hourly series starting 2018-01-01 00:00:00, single channel "value";
// deterministic per seed.
RawSeries synth_series(SynthKind kind, int64_t length, double noise_sigma,
                       uint64_t seed);

// ---- dataset manifest ----

struct DatasetManifest {
  std::string name;
  std::string path;  // CSV location
  int64_t spacing_seconds = 3600;
  std::vector<std::string> target_channels;
  SplitSpec split;
};

DatasetManifest load_manifest(const std::string& path);
// Hard-wired descriptors for the benchmark datasets (frequency, split
// protocol, target column).
DatasetManifest benchmark_manifest(const std::string& name);

}  // namespace yformer
