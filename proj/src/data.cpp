#include "yformer/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "yformer/rng.hpp"

namespace yformer {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("yformer: " + msg);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(cell);
  for (auto& c : out) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    while (!c.empty() && c.front() == ' ') c.erase(c.begin());
  }
  return out;
}

}  // namespace

int64_t RawSeries::channel_index(const std::string& name) const {
  for (int64_t i = 0; i < channels(); ++i)
    if (channel_names[static_cast<size_t>(i)] == name) return i;
  return -1;
}

// ---- calendar ----

CalendarFields civil_from_epoch(int64_t epoch_seconds) {
  using namespace std::chrono;
  int64_t days = epoch_seconds / 86400;
  int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  const sys_days sd{std::chrono::days{days}};
  const year_month_day ymd{sd};
  const weekday wd{sd};
  CalendarFields f;
  f.year = int(ymd.year());
  f.month = int(unsigned(ymd.month()));
  f.day = int(unsigned(ymd.day()));
  f.weekday = int(wd.iso_encoding()) - 1;  // Monday = 0
  f.hour = static_cast<int>(rem / 3600);
  f.minute = static_cast<int>((rem % 3600) / 60);
  f.second = static_cast<int>(rem % 60);
  return f;
}

int64_t epoch_from_civil(int year, int month, int day, int hour, int minute,
                         int second) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{unsigned(month)},
                           std::chrono::day{unsigned(day)}};
  if (!ymd.ok()) fail("invalid calendar date");
  const sys_days sd{ymd};
  return sd.time_since_epoch().count() * int64_t{86400} + hour * 3600 +
         minute * 60 + second;
}

int64_t add_months(int64_t epoch_seconds, int months) {
  using namespace std::chrono;
  const CalendarFields f = civil_from_epoch(epoch_seconds);
  year_month ym{std::chrono::year{f.year}, std::chrono::month{unsigned(f.month)}};
  ym += std::chrono::months{months};
  year_month_day ymd{ym.year(), ym.month(), std::chrono::day{unsigned(f.day)}};
  if (!ymd.ok()) ymd = ym.year() / ym.month() / std::chrono::last;
  const sys_days sd{ymd};
  return sd.time_since_epoch().count() * int64_t{86400} + f.hour * 3600 +
         f.minute * 60 + f.second;
}

std::string format_timestamp(int64_t epoch_seconds) {
  const CalendarFields f = civil_from_epoch(epoch_seconds);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", f.year,
                f.month, f.day, f.hour, f.minute, f.second);
  return buf;
}

// ---- ingestion ----

RawSeries ingest_csv(const std::string& path, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail("empty file " + path);
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "date")
    fail("first column must be named 'date' in " + path);

  RawSeries series;
  series.channel_names.assign(header.begin() + 1, header.end());
  series.columns.resize(series.channel_names.size());

  int64_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      fail("row " + std::to_string(row) + ": expected " +
           std::to_string(header.size()) + " cells, got " +
           std::to_string(cells.size()));
    int y, mo, d, h, mi, s;
    char tail;
    const int matched =
        std::sscanf(cells[0].c_str(), "%d-%d-%d %d:%d:%d%c", &y, &mo, &d, &h,
                    &mi, &s, &tail);
    if (matched != 6)
      fail("row " + std::to_string(row) + ", column date: unparseable cell '" +
           cells[0] + "' (want YYYY-MM-DD HH:MM:SS)");
    series.timestamps.push_back(epoch_from_civil(y, mo, d, h, mi, s));
    for (size_t c = 1; c < cells.size(); ++c) {
      auto& column = series.columns[c - 1];
      if (cells[c].empty()) {
        if (opts.forward_fill && !column.empty()) {
          column.push_back(column.back());
          continue;
        }
        fail("row " + std::to_string(row) + ", column " + header[c] +
             ": missing value");
      }
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0')
        fail("row " + std::to_string(row) + ", column " + header[c] +
             ": unparseable cell '" + cells[c] + "'");
      column.push_back(static_cast<real>(v));
    }
  }

  if (series.rows() < 2) fail("need at least 2 rows to infer frequency");
  series.spacing_seconds = series.timestamps[1] - series.timestamps[0];
  if (series.spacing_seconds <= 0)
    fail("timestamps must be strictly increasing");
  for (int64_t i = 1; i < series.rows(); ++i) {
    const int64_t expected =
        series.timestamps[static_cast<size_t>(i - 1)] + series.spacing_seconds;
    if (series.timestamps[static_cast<size_t>(i)] != expected)
      fail("timestamp gap after " +
           format_timestamp(series.timestamps[static_cast<size_t>(i - 1)]) +
           ": expected " + format_timestamp(expected) + ", got " +
           format_timestamp(series.timestamps[static_cast<size_t>(i)]));
  }
  return series;
}

void write_csv(const RawSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write " + path);
  out << "date";
  for (const auto& name : series.channel_names) out << "," << name;
  out << "\n";
  char buf[64];
  for (int64_t r = 0; r < series.rows(); ++r) {
    out << format_timestamp(series.timestamps[static_cast<size_t>(r)]);
    for (const auto& col : series.columns) {
      std::snprintf(buf, sizeof(buf), "%.12g", double(col[static_cast<size_t>(r)]));
      out << "," << buf;
    }
    out << "\n";
  }
}

// ---- time features ----

int64_t time_feature_count(int64_t spacing_seconds) {
  return spacing_seconds < 3600 ? 5 : 4;
}

void time_feature_row(int64_t ts, int64_t spacing_seconds, real* out) {
  const CalendarFields f = civil_from_epoch(ts);
  out[0] = static_cast<real>((f.month - 1) / 11.0 - 0.5);
  out[1] = static_cast<real>((f.day - 1) / 30.0 - 0.5);
  out[2] = static_cast<real>(f.weekday / 6.0 - 0.5);
  out[3] = static_cast<real>(f.hour / 23.0 - 0.5);
  if (spacing_seconds < 3600) {
    if (spacing_seconds == 900)
      out[4] = static_cast<real>((f.minute / 15) / 3.0 - 0.5);
    else
      out[4] = static_cast<real>(f.minute / 59.0 - 0.5);
  }
}

Tensor time_features(std::span<const int64_t> timestamps,
                     int64_t spacing_seconds) {
  const int64_t F = time_feature_count(spacing_seconds);
  const int64_t n = static_cast<int64_t>(timestamps.size());
  std::vector<real> vals(static_cast<size_t>(n * F));
  for (int64_t i = 0; i < n; ++i)
    time_feature_row(timestamps[static_cast<size_t>(i)], spacing_seconds,
                     vals.data() + i * F);
  return Tensor::from_values({1, n, F}, std::move(vals), false);
}

// ---- splits ----

SplitRanges split_rows(const RawSeries& series, const SplitSpec& spec) {
  const int64_t n = series.rows();
  if (n == 0) fail("empty series");
  SplitRanges r;
  if (spec.mode == SplitSpec::Mode::months) {
    const int64_t t0 = series.timestamps[0];
    const int m1 = static_cast<int>(spec.train);
    const int m2 = m1 + static_cast<int>(spec.val);
    const int m3 = m2 + static_cast<int>(spec.test);
    const int64_t b1 = add_months(t0, m1);
    const int64_t b2 = add_months(t0, m2);
    const int64_t b3 = add_months(t0, m3);
    auto row_before = [&](int64_t ts) {
      return static_cast<int64_t>(
          std::lower_bound(series.timestamps.begin(), series.timestamps.end(), ts) -
          series.timestamps.begin());
    };
    r.train = {0, row_before(b1)};
    r.val = {r.train.end, row_before(b2)};
    r.test = {r.val.end, std::min(row_before(b3), n)};
  } else {
    const int64_t b1 = static_cast<int64_t>(std::floor(n * spec.train));
    const int64_t b2 =
        b1 + static_cast<int64_t>(std::floor(n * spec.val));
    r.train = {0, b1};
    r.val = {b1, b2};
    r.test = {b2, n};
  }
  return r;
}

// ---- standardization ----

StandardizeStats compute_stats(const RawSeries& series, int64_t train_end_row) {
  if (train_end_row <= 0 || train_end_row > series.rows())
    fail("train span is empty");
  StandardizeStats stats;
  for (const auto& col : series.columns) {
    double mean = 0;
    for (int64_t r = 0; r < train_end_row; ++r)
      mean += double(col[static_cast<size_t>(r)]);
    mean /= double(train_end_row);
    double var = 0;
    for (int64_t r = 0; r < train_end_row; ++r) {
      const double d = double(col[static_cast<size_t>(r)]) - mean;
      var += d * d;
    }
    var /= double(train_end_row);
    if (var == 0.0)
      fail("constant channel in train split: " +
           series.channel_names[stats.mean.size()]);
    stats.mean.push_back(mean);
    stats.stddev.push_back(std::sqrt(var));
  }
  return stats;
}

void standardize_inplace(RawSeries& series, const StandardizeStats& stats) {
  if (stats.mean.size() != series.columns.size())
    fail("standardize stats do not match series channels");
  for (size_t c = 0; c < series.columns.size(); ++c) {
    const real mean = static_cast<real>(stats.mean[c]);
    const real inv = static_cast<real>(1.0 / stats.stddev[c]);
    for (auto& v : series.columns[c]) v = (v - mean) * inv;
  }
}

double destandardize_value(const StandardizeStats& stats, int64_t channel,
                           double v) {
  return v * stats.stddev[static_cast<size_t>(channel)] +
         stats.mean[static_cast<size_t>(channel)];
}

// ---- windowing ----

namespace {
int64_t pad_to(int64_t len, int64_t divisor) {
  if (divisor <= 1) return len;
  const int64_t rem = len % divisor;
  return rem == 0 ? len : len + (divisor - rem);
}
}  // namespace

WindowedDataset::WindowedDataset(std::shared_ptr<const RawSeries> series,
                                 RowRange range, WindowSpec spec)
    : series_(std::move(series)), range_(range), spec_(std::move(spec)) {
  if (!series_) fail("windowed dataset needs a series");
  if (range_.begin < 0 || range_.end > series_->rows() ||
      range_.begin > range_.end)
    fail("window range out of bounds");
  for (int64_t c : spec_.target_channels)
    if (c < 0 || c >= series_->channels()) fail("target channel out of range");
  for (int64_t c : spec_.predictor_channels)
    if (c < 0 || c >= series_->channels()) fail("predictor channel out of range");
  if (spec_.target_channels.empty()) fail("need at least one target channel");
  if (spec_.stride < 1) fail("stride must be >= 1");
  const int64_t need = spec_.history_len + spec_.horizon;
  const int64_t span = range_.size();
  if (span < need)
    fail("empty split: span " + std::to_string(span) +
         " is shorter than history+horizon " + std::to_string(need));
  count_ = (span - need) / spec_.stride + 1;
  padded_history_ = pad_to(spec_.history_len, spec_.divisor);
  padded_horizon_ = pad_to(spec_.horizon, spec_.divisor);
}

namespace {

// Left-pads by repeating the first row of the window segment.
void fill_segment(const RawSeries& series, std::span<const int64_t> channels,
                  int64_t first_row, int64_t real_len, int64_t padded_len,
                  real* out /* padded_len x channels */) {
  const int64_t C = static_cast<int64_t>(channels.size());
  const int64_t pad = padded_len - real_len;
  for (int64_t t = 0; t < padded_len; ++t) {
    const int64_t r = first_row + std::max<int64_t>(t - pad, 0);
    for (int64_t c = 0; c < C; ++c)
      out[t * C + c] =
          series.columns[static_cast<size_t>(channels[static_cast<size_t>(c)])]
                        [static_cast<size_t>(r)];
  }
}

void fill_time(const RawSeries& series, int64_t first_row, int64_t real_len,
               int64_t padded_len, int64_t F, real* out) {
  const int64_t pad = padded_len - real_len;
  for (int64_t t = 0; t < padded_len; ++t) {
    const int64_t r = first_row + std::max<int64_t>(t - pad, 0);
    time_feature_row(series.timestamps[static_cast<size_t>(r)],
                     series.spacing_seconds, out + t * F);
  }
}

}  // namespace

WindowedDataset::Batch WindowedDataset::make_batch(
    std::span<const int64_t> ids) const {
  const int64_t N = static_cast<int64_t>(ids.size());
  if (N == 0) fail("empty batch");
  const int64_t T = spec_.history_len, H = spec_.horizon;
  const int64_t Tp = padded_history_, Hp = padded_horizon_;
  const int64_t M = static_cast<int64_t>(spec_.predictor_channels.size());
  const int64_t O = static_cast<int64_t>(spec_.target_channels.size());
  const int64_t Mf = spec_.future_covariates_known ? M : 0;
  const int64_t F = time_feature_count(series_->spacing_seconds);

  std::vector<int64_t> all_channels = spec_.predictor_channels;
  all_channels.insert(all_channels.end(), spec_.target_channels.begin(),
                      spec_.target_channels.end());

  std::vector<real> past((size_t)(N * Tp * (M + O)));
  std::vector<real> y_past((size_t)(N * Tp * O));
  std::vector<real> fut((size_t)(N * Hp * Mf));
  std::vector<real> y_fut((size_t)(N * Hp * O));
  std::vector<real> past_time((size_t)(N * Tp * F));
  std::vector<real> fut_time((size_t)(N * Hp * F));

  for (int64_t n = 0; n < N; ++n) {
    const int64_t id = ids[static_cast<size_t>(n)];
    if (id < 0 || id >= count_) fail("window index out of range");
    const int64_t start = range_.begin + id * spec_.stride;
    fill_segment(*series_, all_channels, start, T, Tp,
                 past.data() + n * Tp * (M + O));
    fill_segment(*series_, spec_.target_channels, start, T, Tp,
                 y_past.data() + n * Tp * O);
    if (Mf > 0)
      fill_segment(*series_, spec_.predictor_channels, start + T, H, Hp,
                   fut.data() + n * Hp * Mf);
    fill_segment(*series_, spec_.target_channels, start + T, H, Hp,
                 y_fut.data() + n * Hp * O);
    fill_time(*series_, start, T, Tp, F, past_time.data() + n * Tp * F);
    fill_time(*series_, start + T, H, Hp, F, fut_time.data() + n * Hp * F);
  }

  Batch batch;
  batch.past_values = Tensor::from_values({N, Tp, M + O}, std::move(past));
  batch.y_past = Tensor::from_values({N, Tp, O}, std::move(y_past));
  batch.future_values = Tensor::from_values({N, Hp, Mf}, std::move(fut));
  batch.y_fut = Tensor::from_values({N, Hp, O}, std::move(y_fut));
  batch.past_time = Tensor::from_values({N, Tp, F}, std::move(past_time));
  batch.future_time = Tensor::from_values({N, Hp, F}, std::move(fut_time));
  return batch;
}

TimeSeriesInstance WindowedDataset::instance(int64_t i) const {
  if (i < 0 || i >= count_) fail("window index out of range");
  const int64_t T = spec_.history_len, H = spec_.horizon;
  const int64_t Tp = padded_history_, Hp = padded_horizon_;
  const int64_t M = static_cast<int64_t>(spec_.predictor_channels.size());
  const int64_t O = static_cast<int64_t>(spec_.target_channels.size());
  const int64_t Mf = spec_.future_covariates_known ? M : 0;
  const int64_t F = time_feature_count(series_->spacing_seconds);
  const int64_t start = range_.begin + i * spec_.stride;

  std::vector<real> x((size_t)(Tp * M)), y((size_t)(Tp * O));
  std::vector<real> xf((size_t)(Hp * Mf)), yf((size_t)(Hp * O));
  std::vector<real> pt((size_t)(Tp * F)), ft((size_t)(Hp * F));
  fill_segment(*series_, spec_.predictor_channels, start, T, Tp, x.data());
  fill_segment(*series_, spec_.target_channels, start, T, Tp, y.data());
  if (Mf > 0)
    fill_segment(*series_, spec_.predictor_channels, start + T, H, Hp, xf.data());
  fill_segment(*series_, spec_.target_channels, start + T, H, Hp, yf.data());
  fill_time(*series_, start, T, Tp, F, pt.data());
  fill_time(*series_, start + T, H, Hp, F, ft.data());

  TimeSeriesInstance inst;
  inst.x = Tensor::from_values({1, Tp, M}, std::move(x));
  inst.y = Tensor::from_values({1, Tp, O}, std::move(y));
  inst.x_fut = Tensor::from_values({1, Hp, Mf}, std::move(xf));
  inst.y_fut = Tensor::from_values({1, Hp, O}, std::move(yf));
  inst.past_time = Tensor::from_values({1, Tp, F}, std::move(pt));
  inst.future_time = Tensor::from_values({1, Hp, F}, std::move(ft));
  return inst;
}

DataSplits make_windows(std::shared_ptr<const RawSeries> series,
                        const SplitRanges& ranges, const WindowSpec& spec) {
  return DataSplits{WindowedDataset(series, ranges.train, spec),
                    WindowedDataset(series, ranges.val, spec),
                    WindowedDataset(series, ranges.test, spec)};
}

// ---- synthetic generator ----

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "sum-of-sines") return SynthKind::sum_of_sines;
  if (s == "trend+season") return SynthKind::trend_season;
  if (s == "random-walk") return SynthKind::random_walk;
  fail("unknown synth kind '" + s +
       "' (want sum-of-sines, trend+season or random-walk)");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::sum_of_sines: return "sum-of-sines";
    case SynthKind::trend_season: return "trend+season";
    case SynthKind::random_walk: return "random-walk";
  }
  return "?";
}

RawSeries synth_series(SynthKind kind, int64_t length, double noise_sigma,
                       uint64_t seed) {
  if (length < 2) fail("synthetic series needs length >= 2");
  RawSeries series;
  series.spacing_seconds = 3600;
  series.channel_names = {"value"};
  series.columns.resize(1);
  series.timestamps.resize(static_cast<size_t>(length));
  const int64_t t0 = epoch_from_civil(2018, 1, 1);
  for (int64_t t = 0; t < length; ++t)
    series.timestamps[static_cast<size_t>(t)] = t0 + t * 3600;

  Rng rng(seed);
  auto& col = series.columns[0];
  col.resize(static_cast<size_t>(length));
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  switch (kind) {
    case SynthKind::sum_of_sines:
      for (int64_t t = 0; t < length; ++t)
        col[static_cast<size_t>(t)] = static_cast<real>(
            std::sin(kTwoPi * double(t) / 24.0) +
            0.5 * std::sin(kTwoPi * double(t) / 168.0) +
            noise_sigma * rng.normal());
      break;
    case SynthKind::trend_season:
      for (int64_t t = 0; t < length; ++t)
        col[static_cast<size_t>(t)] = static_cast<real>(
            0.002 * double(t) + std::sin(kTwoPi * double(t) / 24.0) +
            0.3 * std::sin(kTwoPi * double(t) / 168.0) +
            noise_sigma * rng.normal());
      break;
    case SynthKind::random_walk: {
      double acc = 0;
      for (int64_t t = 0; t < length; ++t) {
        if (t > 0) acc += noise_sigma * rng.normal();
        col[static_cast<size_t>(t)] = static_cast<real>(acc);
      }
      break;
    }
  }
  return series;
}

// ---- manifests ----

namespace {
SplitSpec months_split(double tr, double va, double te) {
  SplitSpec s;
  s.mode = SplitSpec::Mode::months;
  s.train = tr;
  s.val = va;
  s.test = te;
  return s;
}
}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  DatasetManifest m;
  m.name = j.at("name").get<std::string>();
  m.path = j.at("path").get<std::string>();
  const std::string freq = j.at("frequency").get<std::string>();
  if (freq == "1h")
    m.spacing_seconds = 3600;
  else if (freq == "15min")
    m.spacing_seconds = 900;
  else
    fail("manifest frequency must be '1h' or '15min', got '" + freq + "'");
  m.target_channels = j.at("targets").get<std::vector<std::string>>();
  const auto& sp = j.at("split");
  const std::string mode = sp.value("mode", std::string("months"));
  m.split.mode = mode == "fractions" ? SplitSpec::Mode::fractions
                                     : SplitSpec::Mode::months;
  m.split.train = sp.at("train").get<double>();
  m.split.val = sp.at("val").get<double>();
  m.split.test = sp.at("test").get<double>();
  return m;
}

DatasetManifest benchmark_manifest(const std::string& name) {
  DatasetManifest m;
  m.name = name;
  if (name == "ETTh1" || name == "ETTh2") {
    m.spacing_seconds = 3600;
    m.target_channels = {"OT"};
    m.split = months_split(12, 4, 4);
  } else if (name == "ETTm1") {
    m.spacing_seconds = 900;  // ETTh1 split into 15-minute intervals
    m.target_channels = {"OT"};
    m.split = months_split(12, 4, 4);
  } else if (name == "ECL") {
    m.spacing_seconds = 900;
    m.target_channels = {"MT 320"};
    m.split = months_split(15, 3, 4);
  } else {
    fail("unknown benchmark dataset '" + name + "'");
  }
  return m;
}

}  // namespace yformer
