#pragma once

// Sliding-window summary statistics, labelled at each window's endpoint.

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "dataset.hpp"

namespace neuroloop {

enum class Statistic { mean, std, slope, intercept, skewness, kurtosis };

inline constexpr std::array<Statistic, 6> kAllStatistics{
    Statistic::mean,      Statistic::std,      Statistic::slope,
    Statistic::intercept, Statistic::skewness, Statistic::kurtosis};

inline std::string_view to_string(Statistic s) {
  switch (s) {
    case Statistic::mean: return "mean";
    case Statistic::std: return "std";
    case Statistic::slope: return "slope";
    case Statistic::intercept: return "intercept";
    case Statistic::skewness: return "skewness";
    case Statistic::kurtosis: return "kurtosis";
  }
  return "?";
}

inline Statistic parse_statistic(std::string_view s) {
  for (auto st : kAllStatistics)
    if (to_string(st) == s) return st;
  throw UsageError("unknown statistic '" + std::string(s) + "'");
}

/// Comma-separated list, e.g. "mean,skewness,std". Order is kept.
/// Comma-separated statistic names; "all" selects every statistic.
inline std::vector<Statistic> parse_statistics(const std::string& list) {
  if (list == "all") return {kAllStatistics.begin(), kAllStatistics.end()};
  std::vector<Statistic> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_statistic(item));
  if (out.empty()) throw UsageError("empty statistics list");
  return out;
}

inline std::string join_statistics(const std::vector<Statistic>& stats) {
  std::string s;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (i) s += ',';
    s += to_string(stats[i]);
  }
  return s;
}

enum class LabelKind { binary, discrete, continuous };

inline std::string_view to_string(LabelKind k) {
  switch (k) {
    case LabelKind::binary: return "binary";
    case LabelKind::discrete: return "discrete";
    case LabelKind::continuous: return "continuous";
  }
  return "?";
}

inline LabelKind parse_label_kind(std::string_view s) {
  if (s == "binary") return LabelKind::binary;
  if (s == "discrete") return LabelKind::discrete;
  if (s == "continuous") return LabelKind::continuous;
  throw UsageError("label kind must be binary, discrete or continuous");
}

struct WindowSpec {
  double duration_s = 6.0;
  double stride_s = 1.0;
  std::vector<Statistic> statistics{kAllStatistics.begin(), kAllStatistics.end()};
  double min_duration_s = 5.0;
  double max_duration_s = 7.0;
};

inline void validate(const WindowSpec& w) {
  if (!(w.duration_s >= w.min_duration_s - 1e-12 && w.duration_s <= w.max_duration_s + 1e-12))
    throw ValidationError("window.duration_s", "outside [" + std::to_string(w.min_duration_s) +
                                                   ", " + std::to_string(w.max_duration_s) + "]");
  if (!(w.stride_s > 0.0)) throw ValidationError("window.stride_s", "must be positive");
  if (w.statistics.empty()) throw ValidationError("window.statistics", "must be nonempty");
}

/// Statistics of one channel segment sampled every `dt` seconds. Slope and
/// intercept come from a least-squares fit on window-relative time i*dt.
inline std::vector<double> window_stats(std::span<const double> seg, double dt,
                                        const std::vector<Statistic>& stats) {
  const std::size_t n = seg.size();
  std::size_t need = 2;
  for (auto s : stats) {
    if (s == Statistic::skewness) need = std::max<std::size_t>(need, 3);
    if (s == Statistic::kurtosis) need = std::max<std::size_t>(need, 4);
  }
  if (n < need)
    throw ValidationError("segment", "need at least " + std::to_string(need) + " samples");
  const double nn = static_cast<double>(n);
  double mean = 0.0;
  for (double v : seg) mean += v;
  mean /= nn;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : seg) {
    const double d = v - mean, d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= nn;
  m3 /= nn;
  m4 /= nn;
  const double sd = std::sqrt(m2);
  const double tbar = dt * (nn - 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dtm = dt * static_cast<double>(i) - tbar;
    sxy += dtm * (seg[i] - mean);
    sxx += dtm * dtm;
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  const bool flat = sd < 1e-12;
  std::vector<double> out;
  out.reserve(stats.size());
  for (auto s : stats) {
    switch (s) {
      case Statistic::mean: out.push_back(mean); break;
      case Statistic::std: out.push_back(sd); break;
      case Statistic::slope: out.push_back(flat ? 0.0 : slope); break;
      case Statistic::intercept: out.push_back(flat ? mean : mean - slope * tbar); break;
      case Statistic::skewness: out.push_back(flat ? 0.0 : m3 / (m2 * sd)); break;
      case Statistic::kurtosis: out.push_back(flat ? 0.0 : m4 / (m2 * m2) - 3.0); break;
    }
  }
  return out;
}

/// Windowed features. `windows[w]` is the length-L feature vector of window
/// w, ordered channel-major then statistic.
struct FeatureMatrix {
  std::size_t channels = 0;
  std::vector<Statistic> statistics;
  std::vector<std::vector<double>> windows;
  std::vector<double> endpoint_times;
  std::vector<double> labels;
  /// Source demonstration of each window (kept for grouped splits).
  std::vector<std::string> groups;

  std::size_t rows() const { return windows.size(); }
  std::size_t width() const { return channels * statistics.size(); }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> n;
    for (std::size_t m = 0; m < channels; ++m)
      for (auto s : statistics) n.push_back("ch" + std::to_string(m + 1) + "_" + std::string(to_string(s)));
    return n;
  }

  void append(const FeatureMatrix& o) {
    if (rows() == 0 && channels == 0) {
      channels = o.channels;
      statistics = o.statistics;
    }
    if (o.width() != width()) throw ValidationError("features", "feature width mismatch on append");
    windows.insert(windows.end(), o.windows.begin(), o.windows.end());
    endpoint_times.insert(endpoint_times.end(), o.endpoint_times.begin(), o.endpoint_times.end());
    labels.insert(labels.end(), o.labels.begin(), o.labels.end());
    groups.insert(groups.end(), o.groups.begin(), o.groups.end());
  }

  FeatureMatrix subset(const std::vector<std::size_t>& idx) const {
    FeatureMatrix f;
    f.channels = channels;
    f.statistics = statistics;
    for (auto i : idx) {
      f.windows.push_back(windows.at(i));
      f.endpoint_times.push_back(endpoint_times.at(i));
      f.labels.push_back(labels.at(i));
      f.groups.push_back(groups.empty() ? std::string() : groups.at(i));
    }
    return f;
  }
};

inline std::vector<double> label_values(const OptimalityLabels& l, LabelKind kind) {
  switch (kind) {
    case LabelKind::binary: return {l.binary.begin(), l.binary.end()};
    case LabelKind::discrete: return {l.discrete.begin(), l.discrete.end()};
    case LabelKind::continuous: return l.continuous;
  }
  return {};
}

/// Windows over the post-baseline part of `rec`. Each window's label is the
/// value in effect at its endpoint: the latest step at or before the endpoint
/// timestamp (0 if the task has not started).
inline FeatureMatrix extract(const NeuralRecord& rec, const std::vector<double>& label_times,
                             const std::vector<double>& labels, const WindowSpec& spec,
                             const std::string& group = {}) {
  validate(spec);
  if (label_times.size() != labels.size())
    throw ValidationError("labels", "labels and timestamps differ in length");
  const std::size_t first = rec.first_post_baseline();
  const std::size_t total = rec.size() - first;
  const auto win = static_cast<std::size_t>(std::llround(spec.duration_s * rec.sample_rate_hz));
  const auto stride = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.stride_s * rec.sample_rate_hz)));
  if (total < win)
    throw ValidationError("neural", "post-baseline record (" + std::to_string(total) +
                                        " samples) is shorter than one window (" +
                                        std::to_string(win) + ")");
  const std::size_t count = (total - win) / stride + 1;
  const double tol = 0.25 / rec.sample_rate_hz;
  FeatureMatrix f;
  f.channels = rec.channels;
  f.statistics = spec.statistics;
  f.windows.reserve(count);
  std::size_t j = 0;
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t begin = first + w * stride, end = begin + win;
    std::vector<double> row;
    row.reserve(f.width());
    for (std::size_t m = 0; m < rec.channels; ++m) {
      const auto s = window_stats(std::span<const double>(rec.values[m]).subspan(begin, win),
                                  rec.period(), spec.statistics);
      row.insert(row.end(), s.begin(), s.end());
    }
    const double te = rec.timestamps[end - 1];
    while (j < label_times.size() && label_times[j] <= te + tol) ++j;
    f.windows.push_back(std::move(row));
    f.endpoint_times.push_back(te);
    f.labels.push_back(j == 0 ? 0.0 : labels[j - 1]);
    f.groups.push_back(group);
  }
  return f;
}

inline FeatureMatrix extract(const NeuralRecord& rec, const TaskRecord& task,
                             const OptimalityLabels& labels, const WindowSpec& spec,
                             LabelKind kind, const std::string& group = {}) {
  return extract(rec, task.timestamps, label_values(labels, kind), spec, group);
}

// ---------------------------------------------------------------------------
// CSV: f1..fL,label,endpoint_t

inline void write_features_csv(const FeatureMatrix& f, std::ostream& out) {
  for (std::size_t i = 0; i < f.width(); ++i) out << 'f' << i + 1 << ',';
  out << "label,endpoint_t\n";
  out << std::setprecision(17);
  for (std::size_t w = 0; w < f.rows(); ++w) {
    for (double v : f.windows[w]) out << v << ',';
    out << f.labels[w] << ',' << f.endpoint_times[w] << '\n';
  }
}

inline void write_features_csv(const FeatureMatrix& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_features_csv(f, out);
}

/// Reads a feature CSV. Channel/statistic structure is not recoverable from
/// the file, so the result has width L as one channel of L "mean" columns
/// unless `channels`/`statistics` are supplied and consistent.
inline FeatureMatrix read_features_csv(std::istream& in, std::size_t channels = 0,
                                       std::vector<Statistic> statistics = {}) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(1, "empty feature file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "endpoint_t")
    throw ParseError(1, "header must be f1..fL,label,endpoint_t");
  const std::size_t width = header.size() - 2;
  for (std::size_t i = 0; i < width; ++i)
    if (header[i] != "f" + std::to_string(i + 1)) throw ParseError(1, "bad column " + header[i]);
  FeatureMatrix f;
  if (channels && !statistics.empty() && channels * statistics.size() == width) {
    f.channels = channels;
    f.statistics = std::move(statistics);
  } else {
    f.channels = width;
    f.statistics = {Statistic::mean};
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(lineno, "bad number '" + cell + "'");
      }
    }
    if (vals.size() != width + 2)
      throw ParseError(lineno, "expected " + std::to_string(width + 2) + " columns");
    f.endpoint_times.push_back(vals.back());
    f.labels.push_back(vals[width]);
    vals.resize(width);
    f.windows.push_back(std::move(vals));
    f.groups.emplace_back();
  }
  return f;
}

inline FeatureMatrix read_features_csv(const std::string& path, std::size_t channels = 0,
                                       std::vector<Statistic> statistics = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_features_csv(in, channels, std::move(statistics));
}

}  // namespace neuroloop
