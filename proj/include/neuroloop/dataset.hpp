#pragma once

// Data model for one recorded session ("demonstration") and its JSONL
// on-disk form: a header line followed by typed neural ("n") and task ("h")
// rows. See docs/formats.md for the field reference.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace neuroloop {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kDefaultSampleRateHz = 10.0;
inline constexpr double kDefaultBaselineSeconds = 20.0;
inline constexpr std::size_t kDefaultChannels = 8;

/// Multichannel neural time series. `values[m][t]` is channel m at
/// `timestamps[t]`. The baseline is the half-open span
/// [baseline_span[0], baseline_span[1]).
struct NeuralRecord {
  std::size_t channels = 0;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<double> timestamps;
  std::vector<std::vector<double>> values;
  std::array<double, 2> baseline_span{0.0, 0.0};

  std::size_t size() const { return timestamps.size(); }
  double period() const { return 1.0 / sample_rate_hz; }

  /// First sample index at or after the end of the baseline.
  std::size_t first_post_baseline() const {
    return static_cast<std::size_t>(
        std::lower_bound(timestamps.begin(), timestamps.end(), baseline_span[1]) -
        timestamps.begin());
  }

  bool operator==(const NeuralRecord&) const = default;
};

/// Per-step task statistics {S_t, A_t, R_t, S_t+1} with episode ids.
struct TaskRecord {
  Domain domain = Domain::flappy;
  Condition condition = Condition::passive;
  std::vector<double> timestamps;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;
  std::vector<std::vector<double>> next_states;
  std::vector<std::int64_t> episode_ids;

  std::size_t size() const { return timestamps.size(); }
  bool operator==(const TaskRecord&) const = default;
};

struct EpisodeFailure {
  std::int64_t episode = 0;
  std::optional<double> point_of_failure;   // timestamp
  std::optional<double> degree_of_failure;  // mean error after the point of failure

  bool operator==(const EpisodeFailure&) const = default;
};

/// Binary (0 optimal / 1 sub-optimal), discrete (0 / 1 / 2 worst-case) and
/// continuous (mean policy disagreement) labels, parallel to a TaskRecord.
struct OptimalityLabels {
  std::vector<int> binary;
  std::vector<int> discrete;
  std::vector<double> continuous;
  std::vector<EpisodeFailure> episodes;

  std::size_t size() const { return binary.size(); }
  bool operator==(const OptimalityLabels&) const = default;
};

struct Demonstration {
  std::string participant_id;
  Domain domain = Domain::flappy;
  Condition condition = Condition::passive;
  NeuralRecord neural;
  TaskRecord task;
  OptimalityLabels labels;
  std::uint64_t rng_seed = 0;
  int schema_version = kSchemaVersion;
  /// Optional label-calibration metadata carried in the header.
  nlohmann::json calibration = nlohmann::json::object();

  bool operator==(const Demonstration&) const = default;
};

struct ValidationOptions {
  double min_baseline_s = kDefaultBaselineSeconds;
};

/// Contiguous run of one episode inside a TaskRecord: [begin, end).
struct EpisodeRange {
  std::int64_t episode;
  std::size_t begin;
  std::size_t end;
};

inline std::vector<EpisodeRange> episode_ranges(const std::vector<std::int64_t>& ids) {
  std::vector<EpisodeRange> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (out.empty() || out.back().episode != ids[i])
      out.push_back({ids[i], i, i + 1});
    else
      out.back().end = i + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError(field, what);
}

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

inline void validate(const NeuralRecord& r, const ValidationOptions& opt = {}) {
  using detail::require;
  require(r.channels >= 1, "neural.channels", "must be at least 1");
  require(std::isfinite(r.sample_rate_hz) && r.sample_rate_hz > 0.0, "neural.sample_rate_hz",
          "must be positive");
  require(r.values.size() == r.channels, "neural.values",
          "expected " + std::to_string(r.channels) + " channel rows, got " +
              std::to_string(r.values.size()));
  const std::size_t n = r.timestamps.size();
  require(n >= 1, "neural.timestamps", "empty record");
  for (std::size_t m = 0; m < r.channels; ++m) {
    require(r.values[m].size() == n, "neural.values",
            "channel " + std::to_string(m) + " has " + std::to_string(r.values[m].size()) +
                " samples, expected " + std::to_string(n));
    require(detail::all_finite(r.values[m]), "neural.values", "non-finite sample");
  }
  require(detail::all_finite(r.timestamps), "neural.timestamps", "non-finite timestamp");
  const double period = 1.0 / r.sample_rate_hz;
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = r.timestamps[i] - r.timestamps[i - 1];
    require(dt > 0.0, "neural.timestamps", "not strictly increasing at index " + std::to_string(i));
    require(std::abs(dt - period) <= 1e-9, "neural.timestamps",
            "non-uniform spacing at index " + std::to_string(i));
  }
  const auto [b0, b1] = r.baseline_span;
  require(std::isfinite(b0) && std::isfinite(b1) && b0 <= b1, "neural.baseline_span",
          "start must not exceed end");
  require(b0 >= r.timestamps.front() - 1e-9 && b1 <= r.timestamps.back() + 1e-9,
          "neural.baseline_span", "outside the recorded time span");
  require(b1 - b0 >= opt.min_baseline_s - 1e-9, "neural.baseline_span",
          "baseline shorter than " + std::to_string(opt.min_baseline_s) + " s");
}

inline void validate(const TaskRecord& r) {
  using detail::require;
  const std::size_t n = r.timestamps.size();
  require(n >= 1, "task.timestamps", "empty record");
  require(r.states.size() == n, "task.states", "length differs from timestamps");
  require(r.actions.size() == n, "task.actions", "length differs from timestamps");
  require(r.rewards.size() == n, "task.rewards", "length differs from timestamps");
  require(r.next_states.size() == n, "task.next_states", "length differs from timestamps");
  require(r.episode_ids.size() == n, "task.episode_ids", "length differs from timestamps");
  require(detail::all_finite(r.timestamps), "task.timestamps", "non-finite timestamp");
  require(detail::all_finite(r.rewards), "task.rewards", "non-finite reward");
  for (std::size_t i = 1; i < n; ++i) {
    require(r.timestamps[i] > r.timestamps[i - 1], "task.timestamps",
            "not strictly increasing at index " + std::to_string(i));
    require(r.episode_ids[i] >= r.episode_ids[i - 1], "task.episode_ids",
            "episodes must be contiguous and nondecreasing");
  }
  const std::size_t width = action_width(r.domain);
  for (std::size_t i = 0; i < n; ++i) {
    require(detail::all_finite(r.states[i]) && detail::all_finite(r.next_states[i]),
            "task.states", "non-finite observation at step " + std::to_string(i));
    const auto& a = r.actions[i];
    require(a.size() == width, "task.actions",
            "step " + std::to_string(i) + " has width " + std::to_string(a.size()) +
                ", expected " + std::to_string(width));
    require(detail::all_finite(a), "task.actions", "non-finite action");
    if (is_discrete(r.domain)) {
      double sum = 0.0;
      for (double x : a) {
        require(x >= 0.0, "task.actions", "negative probability at step " + std::to_string(i));
        sum += x;
      }
      require(std::abs(sum - 1.0) <= 1e-9, "task.actions",
              "not a probability vector at step " + std::to_string(i));
    }
    if (i + 1 < n && r.episode_ids[i + 1] == r.episode_ids[i])
      require(r.next_states[i] == r.states[i + 1], "task.next_states",
              "next_states[t] != states[t+1] at step " + std::to_string(i));
  }
}

/// True when every run of `b` inside each episode is 0...0 1...1.
inline bool binary_monotone(const std::vector<int>& b, const std::vector<std::int64_t>& episodes) {
  for (std::size_t i = 1; i < b.size(); ++i)
    if (episodes[i] == episodes[i - 1] && b[i] < b[i - 1]) return false;
  return true;
}

inline void validate(const OptimalityLabels& l, const TaskRecord& task) {
  using detail::require;
  const std::size_t n = task.size();
  require(l.binary.size() == n, "labels.binary", "length differs from task record");
  require(l.discrete.size() == n, "labels.discrete", "length differs from task record");
  require(l.continuous.size() == n, "labels.continuous", "length differs from task record");
  for (std::size_t i = 0; i < n; ++i) {
    require(l.binary[i] == 0 || l.binary[i] == 1, "labels.binary", "value outside {0,1}");
    require(l.discrete[i] >= 0 && l.discrete[i] <= 2, "labels.discrete", "value outside {0,1,2}");
    require(l.binary[i] == 1 || l.discrete[i] == 0, "labels.discrete",
            "discrete label set while binary label is optimal at step " + std::to_string(i));
    require(std::isfinite(l.continuous[i]) && l.continuous[i] >= 0.0, "labels.continuous",
            "must be finite and nonnegative");
  }
  require(binary_monotone(l.binary, task.episode_ids), "labels.binary",
          "binary labels non-monotone");
  const auto ranges = episode_ranges(task.episode_ids);
  for (const auto& ep : l.episodes) {
    auto it = std::find_if(ranges.begin(), ranges.end(),
                           [&](const EpisodeRange& r) { return r.episode == ep.episode; });
    require(it != ranges.end(), "labels.episodes",
            "unknown episode " + std::to_string(ep.episode));
    if (ep.point_of_failure) {
      require(*ep.point_of_failure >= task.timestamps[it->begin] - 1e-9 &&
                  *ep.point_of_failure <= task.timestamps[it->end - 1] + 1e-9,
              "labels.episodes.point_of_failure", "outside its episode");
    }
    if (ep.degree_of_failure)
      require(std::isfinite(*ep.degree_of_failure) && *ep.degree_of_failure >= 0.0,
              "labels.episodes.degree_of_failure", "must be finite and nonnegative");
  }
}

/// Nearest-neighbour mapping of task steps into neural samples.
///
/// Each task step is matched to the neural sample closest in time (lower
/// index on exact ties). Throws AlignmentError when any step is further than
/// half a sample period from every neural sample.
inline std::vector<std::pair<std::size_t, std::size_t>> align_task_to_neural(
    const std::vector<double>& task_times, const NeuralRecord& neural) {
  const auto& nt = neural.timestamps;
  if (task_times.empty() || nt.empty()) throw AlignmentError("empty time series");
  const double half = 0.5 / neural.sample_rate_hz;
  const double tol = 1e-9;
  if (task_times.back() < nt.front() - half - tol || task_times.front() > nt.back() + half + tol)
    throw AlignmentError("task and neural time spans do not overlap");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(task_times.size());
  for (std::size_t i = 0; i < task_times.size(); ++i) {
    const double t = task_times[i];
    auto it = std::lower_bound(nt.begin(), nt.end(), t);
    std::size_t j = static_cast<std::size_t>(it - nt.begin());
    if (j == nt.size() || (j > 0 && t - nt[j - 1] <= nt[j] - t)) j = j == 0 ? 0 : j - 1;
    if (std::abs(nt[j] - t) > half + tol) {
      std::ostringstream msg;
      msg << "task step " << i << " at t=" << t << " s has no neural sample within " << half
          << " s";
      throw AlignmentError(msg.str());
    }
    out.emplace_back(i, j);
  }
  return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> align_task_to_neural(
    const Demonstration& demo) {
  return align_task_to_neural(demo.task.timestamps, demo.neural);
}

inline void validate(const Demonstration& d, const ValidationOptions& opt = {}) {
  detail::require(d.schema_version == kSchemaVersion, "schema_version", "unsupported version");
  detail::require(d.task.domain == d.domain, "task.domain", "differs from demonstration domain");
  detail::require(d.task.condition == d.condition, "task.condition",
                  "differs from demonstration condition");
  validate(d.neural, opt);
  validate(d.task);
  validate(d.labels, d.task);
  try {
    (void)align_task_to_neural(d);
  } catch (const AlignmentError& e) {
    throw ValidationError("task.timestamps", e.what());
  }
}

// ---------------------------------------------------------------------------
// JSONL serialization

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson optional_json(const std::optional<double>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline void write_demonstration(const Demonstration& demo, std::ostream& out,
                                const ValidationOptions& opt = {}) {
  using detail::ojson;
  validate(demo, opt);
  ojson header;
  header["schema_version"] = demo.schema_version;
  header["participant_id"] = demo.participant_id;
  header["domain"] = to_string(demo.domain);
  header["condition"] = to_string(demo.condition);
  header["channels"] = demo.neural.channels;
  header["sample_rate_hz"] = demo.neural.sample_rate_hz;
  header["rng_seed"] = demo.rng_seed;
  header["baseline_span"] = {demo.neural.baseline_span[0], demo.neural.baseline_span[1]};
  ojson episodes = ojson::array();
  for (const auto& ep : demo.labels.episodes)
    episodes.push_back({{"ep", ep.episode},
                        {"pof", detail::optional_json(ep.point_of_failure)},
                        {"dof", detail::optional_json(ep.degree_of_failure)}});
  header["episodes"] = std::move(episodes);
  if (!demo.calibration.empty()) header["calibration"] = ojson::parse(demo.calibration.dump());
  out << header.dump() << '\n';

  const auto& nr = demo.neural;
  std::vector<double> column(nr.channels);
  for (std::size_t t = 0; t < nr.size(); ++t) {
    for (std::size_t m = 0; m < nr.channels; ++m) column[m] = nr.values[m][t];
    ojson row;
    row["k"] = "n";
    row["t"] = nr.timestamps[t];
    row["v"] = column;
    out << row.dump() << '\n';
  }

  const auto& tr = demo.task;
  for (std::size_t t = 0; t < tr.size(); ++t) {
    ojson row;
    row["k"] = "h";
    row["t"] = tr.timestamps[t];
    row["ep"] = tr.episode_ids[t];
    row["s"] = tr.states[t];
    row["a"] = tr.actions[t];
    row["r"] = tr.rewards[t];
    row["b"] = demo.labels.binary[t];
    row["vlab"] = demo.labels.discrete[t];
    row["e"] = demo.labels.continuous[t];
    // The successor of an episode's final step is not the next row's state.
    const bool last_in_episode = t + 1 == tr.size() || tr.episode_ids[t + 1] != tr.episode_ids[t];
    if (last_in_episode) row["s2"] = tr.next_states[t];
    out << row.dump() << '\n';
  }
}

inline void write_demonstration(const Demonstration& demo, const std::string& path,
                                const ValidationOptions& opt = {}) {
  std::ostringstream buffer;
  write_demonstration(demo, buffer, opt);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  file << buffer.str();
  file.flush();
  if (!file) throw IoError("failed writing '" + path + "'");
}

inline Demonstration read_demonstration(std::istream& in, const ValidationOptions& opt = {}) {
  using nlohmann::json;
  Demonstration demo;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::pair<std::size_t, std::vector<double>>> pending_s2;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!row.contains("schema_version")) throw ParseError(line_no, "missing header");
        demo.schema_version = row.at("schema_version").get<int>();
        if (demo.schema_version != kSchemaVersion)
          throw VersionError("unsupported schema_version " + std::to_string(demo.schema_version));
        demo.participant_id = row.at("participant_id").get<std::string>();
        demo.domain = parse_domain(row.at("domain").get<std::string>());
        demo.condition = parse_condition(row.at("condition").get<std::string>());
        demo.neural.channels = row.at("channels").get<std::size_t>();
        demo.neural.sample_rate_hz = row.at("sample_rate_hz").get<double>();
        demo.rng_seed = row.at("rng_seed").get<std::uint64_t>();
        const auto& span = row.at("baseline_span");
        demo.neural.baseline_span = {span.at(0).get<double>(), span.at(1).get<double>()};
        demo.neural.values.assign(demo.neural.channels, {});
        if (row.contains("episodes"))
          for (const auto& ep : row["episodes"])
            demo.labels.episodes.push_back({ep.at("ep").get<std::int64_t>(),
                                            detail::optional_from(ep.at("pof")),
                                            detail::optional_from(ep.at("dof"))});
        if (row.contains("calibration")) demo.calibration = row["calibration"];
        demo.task.domain = demo.domain;
        demo.task.condition = demo.condition;
        have_header = true;
        continue;
      }
      const std::string kind = row.at("k").get<std::string>();
      if (kind == "n") {
        const auto v = row.at("v").get<std::vector<double>>();
        if (v.size() != demo.neural.channels)
          throw ValidationError("neural.values", "line " + std::to_string(line_no) + " has " +
                                                     std::to_string(v.size()) +
                                                     " channels, header declares " +
                                                     std::to_string(demo.neural.channels));
        demo.neural.timestamps.push_back(row.at("t").get<double>());
        for (std::size_t m = 0; m < v.size(); ++m) demo.neural.values[m].push_back(v[m]);
      } else if (kind == "h") {
        auto& tr = demo.task;
        tr.timestamps.push_back(row.at("t").get<double>());
        tr.episode_ids.push_back(row.at("ep").get<std::int64_t>());
        tr.states.push_back(row.at("s").get<std::vector<double>>());
        tr.actions.push_back(row.at("a").get<std::vector<double>>());
        tr.rewards.push_back(row.at("r").get<double>());
        demo.labels.binary.push_back(row.at("b").get<int>());
        demo.labels.discrete.push_back(row.at("vlab").get<int>());
        demo.labels.continuous.push_back(row.at("e").get<double>());
        if (row.contains("s2"))
          pending_s2.emplace_back(tr.size() - 1, row["s2"].get<std::vector<double>>());
      } else {
        throw ParseError(line_no, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("bad record: ") + e.what());
    }
  }
  if (!have_header) throw ParseError(line_no, "missing header");

  auto& tr = demo.task;
  tr.next_states.resize(tr.size());
  for (std::size_t t = 0; t + 1 < tr.size(); ++t)
    if (tr.episode_ids[t + 1] == tr.episode_ids[t]) tr.next_states[t] = tr.states[t + 1];
  for (auto& [t, s2] : pending_s2) tr.next_states[t] = std::move(s2);
  for (std::size_t t = 0; t < tr.size(); ++t) {
    const bool last = t + 1 == tr.size() || tr.episode_ids[t + 1] != tr.episode_ids[t];
    if (last && tr.next_states[t].empty())
      throw ParseError(line_no, "episode-final task row " + std::to_string(t) + " lacks s2");
  }
  validate(demo, opt);
  return demo;
}

inline Demonstration read_demonstration(const std::string& path,
                                        const ValidationOptions& opt = {}) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path + "'");
  return read_demonstration(file, opt);
}

// ---------------------------------------------------------------------------
// CSV import for real recordings: header `t,ch1,...,chM`, one sample per row.

inline NeuralRecord read_neural_csv(std::istream& in,
                                    double baseline_s = kDefaultBaselineSeconds,
                                    const ValidationOptions& opt = {}) {
  NeuralRecord rec;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty CSV");
  ++line_no;
  {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cols;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() < 2 || cols[0] != "t") throw ParseError(1, "header must be t,ch1..chM");
    for (std::size_t m = 1; m < cols.size(); ++m)
      if (cols[m] != "ch" + std::to_string(m))
        throw ParseError(1, "expected column ch" + std::to_string(m) + ", got '" + cols[m] + "'");
    rec.channels = cols.size() - 1;
    rec.values.assign(rec.channels, {});
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    try {
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ParseError(line_no, "non-numeric cell");
    }
    if (row.size() != rec.channels + 1)
      throw ParseError(line_no, "expected " + std::to_string(rec.channels + 1) + " cells");
    rec.timestamps.push_back(row[0]);
    for (std::size_t m = 0; m < rec.channels; ++m) rec.values[m].push_back(row[m + 1]);
  }
  if (rec.timestamps.size() < 2) throw ParseError(line_no, "need at least two samples");
  rec.sample_rate_hz = 1.0 / (rec.timestamps[1] - rec.timestamps[0]);
  rec.baseline_span = {rec.timestamps.front(), rec.timestamps.front() + baseline_s};
  validate(rec, opt);
  return rec;
}

inline NeuralRecord read_neural_csv(const std::string& path,
                                    double baseline_s = kDefaultBaselineSeconds,
                                    const ValidationOptions& opt = {}) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open '" + path + "'");
  return read_neural_csv(file, baseline_s, opt);
}

inline void write_neural_csv(const NeuralRecord& rec, std::ostream& out) {
  out << 't';
  for (std::size_t m = 1; m <= rec.channels; ++m) out << ",ch" << m;
  out << '\n';
  out.precision(17);
  for (std::size_t t = 0; t < rec.size(); ++t) {
    out << rec.timestamps[t];
    for (std::size_t m = 0; m < rec.channels; ++m) out << ',' << rec.values[m][t];
    out << '\n';
  }
}

}  // namespace neuroloop
