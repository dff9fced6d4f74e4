#pragma once

// Baseline z-scoring and causal 4th-order Butterworth filtering.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "core.hpp"
#include "dataset.hpp"

namespace neuroloop {

struct FilterSpec {
  enum class Kind { none, lowpass, bandpass };
  Kind kind = Kind::lowpass;
  int order = 4;
  std::vector<double> cutoffs_hz = {0.5};
  double sample_rate_hz = kDefaultSampleRateHz;
};

inline void validate(const FilterSpec& f) {
  if (f.kind == FilterSpec::Kind::none) return;
  if (f.order != 4) throw ValidationError("filter.order", "only order 4 is supported");
  if (!(f.sample_rate_hz > 0.0)) throw ValidationError("filter.sample_rate_hz", "must be positive");
  const std::size_t want = f.kind == FilterSpec::Kind::lowpass ? 1 : 2;
  if (f.cutoffs_hz.size() != want)
    throw ValidationError("filter.cutoffs_hz", "expected " + std::to_string(want) + " cutoff(s)");
  for (double c : f.cutoffs_hz) {
    if (!(c > 0.0)) throw ValidationError("filter.cutoffs_hz", "cutoffs must be positive");
    if (!(c < 0.5 * f.sample_rate_hz))
      throw ValidationError("filter.cutoffs_hz", "cutoff must be below Nyquist");
  }
  if (want == 2 && !(f.cutoffs_hz[0] < f.cutoffs_hz[1]))
    throw ValidationError("filter.cutoffs_hz", "bandpass needs low < high");
}

/// Parses "none", "lowpass:F" or "bandpass:LO:HI".
inline FilterSpec parse_filter(const std::string& text, double sample_rate_hz = kDefaultSampleRateHz) {
  FilterSpec f;
  f.sample_rate_hz = sample_rate_hz;
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i)
    if (i == text.size() || text[i] == ':') {
      parts.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("bad filter cutoff '" + s + "'");
    }
  };
  if (parts[0] == "none" && parts.size() == 1) {
    f.kind = FilterSpec::Kind::none;
    f.cutoffs_hz.clear();
  } else if (parts[0] == "lowpass" && parts.size() == 2) {
    f.kind = FilterSpec::Kind::lowpass;
    f.cutoffs_hz = {number(parts[1])};
  } else if (parts[0] == "bandpass" && parts.size() == 3) {
    f.kind = FilterSpec::Kind::bandpass;
    f.cutoffs_hz = {number(parts[1]), number(parts[2])};
  } else {
    throw UsageError("filter must be none, lowpass:F or bandpass:LO:HI, got '" + text + "'");
  }
  validate(f);
  return f;
}

inline std::string to_string(const FilterSpec& f) {
  auto num = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (s.back() == '.') s.pop_back();
    return s;
  };
  switch (f.kind) {
    case FilterSpec::Kind::none: return "none";
    case FilterSpec::Kind::lowpass: return "lowpass:" + num(f.cutoffs_hz[0]);
    case FilterSpec::Kind::bandpass:
      return "bandpass:" + num(f.cutoffs_hz[0]) + ":" + num(f.cutoffs_hz[1]);
  }
  return "?";
}

/// y = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
};

using Sos = std::vector<Biquad>;

namespace filter_detail {

using cplx = std::complex<double>;

inline cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

inline double prewarp(double f, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f / fs); }

/// Analog Butterworth prototype poles (unit cutoff) in the upper half plane.
inline std::vector<cplx> prototype_upper_poles(int order) {
  std::vector<cplx> p;
  for (int k = 1; k <= order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
    p.push_back(std::polar(1.0, theta));
  }
  return p;
}

inline Biquad section(cplx zpole, double b0, double b1, double b2) {
  return {b0, b1, b2, -2.0 * zpole.real(), std::norm(zpole)};
}

inline cplx section_response(const Biquad& s, double omega) {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

}  // namespace filter_detail

/// Complex response of the cascade at frequency f.
inline std::complex<double> frequency_response(const Sos& sos, double f, double fs) {
  const double omega = 2.0 * std::numbers::pi * f / fs;
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= filter_detail::section_response(s, omega);
  return h;
}

inline Sos butterworth_coefficients(const FilterSpec& spec) {
  using namespace filter_detail;
  validate(spec);
  const double fs = spec.sample_rate_hz;
  Sos sos;
  if (spec.kind == FilterSpec::Kind::none) return sos;
  const auto proto = prototype_upper_poles(spec.order);
  if (spec.kind == FilterSpec::Kind::lowpass) {
    const double wc = prewarp(spec.cutoffs_hz[0], fs);
    for (const cplx p : proto) {
      const cplx z = bilinear(wc * p, fs);
      Biquad s = section(z, 1.0, 2.0, 1.0);
      const double g = (1.0 + s.a1 + s.a2) / 4.0;  // unit DC gain per section
      s.b0 *= g;
      s.b1 *= g;
      s.b2 *= g;
      sos.push_back(s);
    }
    return sos;
  }
  const double wl = prewarp(spec.cutoffs_hz[0], fs), wh = prewarp(spec.cutoffs_hz[1], fs);
  const double w0 = std::sqrt(wl * wh), bw = wh - wl;
  const double omega0 = 2.0 * std::atan(w0 / (2.0 * fs));
  for (const cplx p : proto) {
    // s^2 - p*bw*s + w0^2 = 0 gives the two bandpass poles for prototype pole p.
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    for (const cplx s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
      Biquad sec = section(bilinear(s, fs), 1.0, 0.0, -1.0);
      const double g = 1.0 / std::abs(section_response(sec, omega0));
      sec.b0 *= g;
      sec.b2 *= g;
      sos.push_back(sec);
    }
  }
  return sos;
}

/// Largest pole magnitude across sections.
inline double max_pole_radius(const Sos& sos) {
  double r = 0.0;
  for (const auto& s : sos) {
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    r = std::max({r, std::abs((-s.a1 + disc) / 2.0), std::abs((-s.a1 - disc) / 2.0)});
  }
  return r;
}

/// Causal cascade (transposed direct form II), zero initial state.
inline std::vector<double> filter_signal(const Sos& sos, const std::vector<double>& x) {
  std::vector<double> y = x;
  for (const auto& s : sos) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

inline NeuralRecord apply_filter(const NeuralRecord& rec, const FilterSpec& spec) {
  FilterSpec f = spec;
  f.sample_rate_hz = rec.sample_rate_hz;
  const Sos sos = butterworth_coefficients(f);
  NeuralRecord out = rec;
  for (auto& ch : out.values) ch = filter_signal(sos, ch);
  return out;
}

inline constexpr double kStdFloor = 1e-12;

struct Calibrated {
  NeuralRecord record;
  /// Channels whose baseline std fell below the floor; only centred.
  std::vector<std::size_t> degenerate_channels;
};

inline Calibrated baseline_calibrate(const NeuralRecord& rec,
                                     double min_baseline_s = kDefaultBaselineSeconds) {
  if (rec.baseline_span[1] - rec.baseline_span[0] < min_baseline_s - 1e-9)
    throw ValidationError("baseline_span", "baseline shorter than " +
                                               std::to_string(min_baseline_s) + " s");
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < rec.size(); ++t)
    if (rec.timestamps[t] >= rec.baseline_span[0] && rec.timestamps[t] < rec.baseline_span[1])
      idx.push_back(t);
  if (idx.empty()) throw ValidationError("baseline_span", "no samples inside the baseline");
  Calibrated out{rec, {}};
  for (std::size_t m = 0; m < rec.channels; ++m) {
    auto& ch = out.record.values[m];
    double mean = 0.0;
    for (auto t : idx) mean += ch[t];
    mean /= static_cast<double>(idx.size());
    double var = 0.0;
    for (auto t : idx) var += (ch[t] - mean) * (ch[t] - mean);
    const double sd = std::sqrt(var / static_cast<double>(idx.size()));
    const bool degenerate = sd < kStdFloor;
    if (degenerate) out.degenerate_channels.push_back(m);
    for (double& v : ch) v = degenerate ? v - mean : (v - mean) / sd;
  }
  return out;
}

/// Calibration followed by filtering.
inline Calibrated preprocess(const NeuralRecord& rec, const FilterSpec& spec,
                             double min_baseline_s = kDefaultBaselineSeconds) {
  auto c = baseline_calibrate(rec, min_baseline_s);
  c.record = apply_filter(c.record, spec);
  return c;
}

}  // namespace neuroloop
