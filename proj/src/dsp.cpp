// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace levelsep::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. inverse=true omits the 1/N
// scaling; callers that need it divide themselves.
struct Fft {
  int n;
  std::vector<std::size_t> rev;
  std::vector<std::complex<double>> tw;  // forward twiddles, n/2 entries

  explicit Fft(int size) : n(size), rev(size) {
    int lg = 0;
    while ((1 << lg) < n) ++lg;
    for (int i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < lg; ++b)
        if (i & (1 << b)) r |= std::size_t{1} << (lg - 1 - b);
      rev[i] = r;
    }
    tw.resize(n / 2);
    for (int k = 0; k < n / 2; ++k) {
      double ang = -2.0 * kPi * k / n;
      tw[k] = {std::cos(ang), std::sin(ang)};
    }
  }

  void run(std::complex<double>* a, bool inverse) const {
    for (int i = 0; i < n; ++i) {
      std::size_t j = rev[i];
      if (static_cast<std::size_t>(i) < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
      int step = n / len;
      for (int i = 0; i < n; i += len) {
        for (int k = 0; k < len / 2; ++k) {
          std::complex<double> w = tw[static_cast<std::size_t>(k) * step];
          if (inverse) w = std::conj(w);
          std::complex<double> u = a[i + k];
          std::complex<double> v = a[i + k + len / 2] * w;
          a[i + k] = u + v;
          a[i + k + len / 2] = u - v;
        }
      }
    }
  }
};

std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.n_fft);
  // periodic sqrt-Hann; its square overlap-adds to a constant for any hop
  // dividing n_fft
  for (int i = 0; i < cfg.n_fft; ++i) {
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.n_fft));
  }
  return w;
}

}  // namespace

void StftConfig::validate() const {
  if (!is_pow2(n_fft)) throw ConfigError("n_fft must be a power of two");
  if (hop <= 0 || hop > n_fft) throw ConfigError("hop must be in (0, n_fft]");
  if (n_fft % hop != 0) throw ConfigError("hop must divide n_fft (COLA)");
}

std::size_t StftConfig::frame_count(std::size_t len) const {
  if (len < static_cast<std::size_t>(n_fft)) return 0;
  return 1 + (len - static_cast<std::size_t>(n_fft)) / static_cast<std::size_t>(hop);
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t len = w.samples.size();
  if (len < static_cast<std::size_t>(cfg.n_fft)) throw ConfigError("input too short");

  const std::size_t frames = cfg.frame_count(len);
  const std::size_t n_bins = static_cast<std::size_t>(cfg.n_bins());
  const std::vector<double> win = make_window(cfg);
  const Fft fft(cfg.n_fft);

  ComplexSpectrogram out;
  out.rows = n_bins;
  out.cols = frames;
  out.bins.assign(n_bins * frames, {0.0, 0.0});
  out.config = cfg;
  out.sample_rate = w.sample_rate;

  std::vector<std::complex<double>> frame(cfg.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = w.samples.data() + t * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.n_fft; ++i) frame[i] = {x[i] * win[i], 0.0};
    fft.run(frame.data(), false);
    for (std::size_t f = 0; f < n_bins; ++f) out.at(f, t) = frame[f];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s) {
  const StftConfig& cfg = s.config;
  cfg.validate();
  if (s.rows != static_cast<std::size_t>(cfg.n_bins()) || s.cols < 1) {
    throw NumericalError("istft: malformed spectrogram shape");
  }

  const std::size_t frames = s.cols;
  const std::size_t out_len =
      (frames - 1) * static_cast<std::size_t>(cfg.hop) + static_cast<std::size_t>(cfg.n_fft);
  const std::vector<double> win = make_window(cfg);
  const Fft fft(cfg.n_fft);

  std::vector<double> num(out_len, 0.0);
  std::vector<double> den(out_len, 0.0);
  std::vector<std::complex<double>> spec(cfg.n_fft);

  for (std::size_t t = 0; t < frames; ++t) {
    spec[0] = s.at(0, t);
    for (int f = 1; f < cfg.n_fft / 2; ++f) {
      spec[f] = s.at(static_cast<std::size_t>(f), t);
      spec[cfg.n_fft - f] = std::conj(spec[f]);
    }
    spec[cfg.n_fft / 2] = s.at(static_cast<std::size_t>(cfg.n_fft / 2), t);
    fft.run(spec.data(), true);
    const std::size_t base = t * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.n_fft; ++i) {
      double sample = spec[i].real() / cfg.n_fft;
      num[base + i] += win[i] * sample;
      den[base + i] += win[i] * win[i];
    }
  }

  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    out.samples[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
  }
  return out;
}

Mat magnitude(const ComplexSpectrogram& s) {
  Mat m(s.rows, s.cols);
  for (std::size_t i = 0; i < s.bins.size(); ++i) m.v[i] = std::abs(s.bins[i]);
  return m;
}

Mat log_magnitude_of(const Mat& mag, double floor_db) {
  double mx = 0.0;
  for (double x : mag.v) mx = std::max(mx, x);
  Mat out(mag.rows, mag.cols, 0.0);
  if (mx <= 0.0) return out;  // all-zero clip maps to all zeros

  const double floor_lin = mx * std::pow(10.0, floor_db / 20.0);
  const double top_db = 20.0 * std::log10(mx);
  const double span = -floor_db;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    double db = 20.0 * std::log10(std::max(mag.v[i], floor_lin));
    out.v[i] = (db - top_db + span) / span;
  }
  return out;
}

Mat log_magnitude(const ComplexSpectrogram& s, double floor_db) {
  return log_magnitude_of(magnitude(s), floor_db);
}

Waveform reconstruct_source(const Mat& mask, const ComplexSpectrogram& mix) {
  if (mask.rows != mix.rows || mask.cols != mix.cols) {
    throw NumericalError("reconstruct_source: mask/spectrogram shape mismatch");
  }
  ComplexSpectrogram masked = mix;
  for (std::size_t i = 0; i < masked.bins.size(); ++i) {
    // mask applies to the magnitude; the mixture phase is kept
    masked.bins[i] *= mask.v[i];
  }
  return istft(masked);
}

std::pair<std::size_t, std::size_t> interior_range(const StftConfig& cfg, std::size_t len) {
  cfg.validate();
  const std::size_t frames = cfg.frame_count(len);
  if (frames == 0) return {0, 0};
  const std::size_t covered =
      (frames - 1) * static_cast<std::size_t>(cfg.hop) + static_cast<std::size_t>(cfg.n_fft);
  const std::size_t full = static_cast<std::size_t>(cfg.n_fft / cfg.hop);
  auto n_cover = [&](std::size_t i) {
    // frames t with t*hop <= i < t*hop + n_fft
    std::size_t hop = static_cast<std::size_t>(cfg.hop);
    std::size_t lo = i < static_cast<std::size_t>(cfg.n_fft)
                         ? 0
                         : (i - static_cast<std::size_t>(cfg.n_fft)) / hop + 1;
    std::size_t hi = std::min(i / hop, frames - 1);
    return hi >= lo ? hi - lo + 1 : 0;
  };
  std::size_t lo = 0;
  while (lo < covered && n_cover(lo) < full) ++lo;
  std::size_t hi = covered;
  while (hi > lo && n_cover(hi - 1) < full) --hi;
  return {lo, hi};
}

double dbfs(const Waveform& w) {
  if (w.samples.empty()) return kLevelFloorDb;
  double acc = 0.0;
  for (double x : w.samples) acc += x * x;
  const double ms = acc / static_cast<double>(w.samples.size());
  if (ms <= 0.0) return kLevelFloorDb;
  return std::max(10.0 * std::log10(ms), kLevelFloorDb);
}

namespace detail {

// Both K-weighting stages come from bilinear-transform designs whose analog
// prototypes reproduce the coefficient tables of BS.1770-4 at 48 kHz; other
// rates rescale the same prototypes.
Biquad k_shelf(double sample_rate) {
  const double db_gain = 3.999843853973347;
  const double fc = 1681.974450955533;
  const double q = 0.7071752369554196;

  const double k = std::tan(kPi * fc / sample_rate);
  const double vh = std::pow(10.0, db_gain / 20.0);
  const double vb = std::pow(vh, 0.4996667741545416);
  const double denom = 1.0 + k / q + k * k;
  Biquad out;
  out.b0 = (vh + vb * k / q + k * k) / denom;
  out.b1 = 2.0 * (k * k - vh) / denom;
  out.b2 = (vh - vb * k / q + k * k) / denom;
  out.a1 = 2.0 * (k * k - 1.0) / denom;
  out.a2 = (1.0 - k / q + k * k) / denom;
  return out;
}

Biquad k_highpass(double sample_rate) {
  const double fc = 38.13547087602444;
  const double q = 0.5003270373238773;

  // The published table leaves the numerator at {1, -2, 1}; the resulting
  // slight passband gain is part of the standardized response.
  const double k = std::tan(kPi * fc / sample_rate);
  const double denom = 1.0 + k / q + k * k;
  Biquad out;
  out.b0 = 1.0;
  out.b1 = -2.0;
  out.b2 = 1.0;
  out.a1 = 2.0 * (k * k - 1.0) / denom;
  out.a2 = (1.0 - k / q + k * k) / denom;
  return out;
}

std::vector<double> biquad_filter(const Biquad& q, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double yi = q.b0 * x[i] + q.b1 * x1 + q.b2 * x2 - q.a1 * y1 - q.a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = yi;
    y[i] = yi;
  }
  return y;
}

void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  if (!is_pow2(static_cast<int>(a.size()))) throw ConfigError("fft: length must be a power of two");
  Fft(static_cast<int>(a.size())).run(a.data(), inverse);
}

}  // namespace detail

double lufs_integrated(const Waveform& w) {
  const int sr = w.sample_rate;
  if (sr != 8000 && sr != 16000 && sr != 44100 && sr != 48000) {
    throw ConfigError("lufs_integrated: unsupported sample rate " + std::to_string(sr));
  }
  const std::size_t block = static_cast<std::size_t>(sr) * 4 / 10;  // 400 ms
  const std::size_t step = block / 4;                               // 75% overlap
  if (w.samples.size() < block) throw ConfigError("too short for gating");

  std::vector<double> kw =
      detail::biquad_filter(detail::k_highpass(sr), detail::biquad_filter(detail::k_shelf(sr), w.samples));

  const std::size_t n_blocks = (w.samples.size() - block) / step + 1;
  std::vector<double> z(n_blocks);
  for (std::size_t j = 0; j < n_blocks; ++j) {
    double acc = 0.0;
    const double* p = kw.data() + j * step;
    for (std::size_t i = 0; i < block; ++i) acc += p[i] * p[i];
    z[j] = acc / static_cast<double>(block);
  }

  auto loudness = [](double zj) {
    return zj > 0.0 ? -0.691 + 10.0 * std::log10(zj)
                    : -std::numeric_limits<double>::infinity();
  };

  // absolute gate at -70 LUFS
  double sum_abs = 0.0;
  std::size_t n_abs = 0;
  for (double zj : z) {
    if (loudness(zj) > -70.0) {
      sum_abs += zj;
      ++n_abs;
    }
  }
  if (n_abs == 0) return kLevelFloorDb;

  // relative gate 10 LU below the absolute-gated mean
  const double gamma_rel = loudness(sum_abs / static_cast<double>(n_abs)) - 10.0;
  double sum_rel = 0.0;
  std::size_t n_rel = 0;
  for (double zj : z) {
    double lj = loudness(zj);
    if (lj > -70.0 && lj > gamma_rel) {
      sum_rel += zj;
      ++n_rel;
    }
  }
  if (n_rel == 0) return kLevelFloorDb;
  return std::max(loudness(sum_rel / static_cast<double>(n_rel)), kLevelFloorDb);
}

Waveform lufs_normalize(const Waveform& w, double target_lufs) {
  double measured = lufs_integrated(w);
  if (measured <= kLevelFloorDb) throw NumericalError("cannot normalize silence");

  // One gain step is exact unless the gating set shifts; re-measure and
  // refine, still ending with a single scalar gain overall.
  double gain = 1.0;
  Waveform out = w;
  for (int iter = 0; iter < 5; ++iter) {
    double delta = target_lufs - measured;
    if (std::abs(delta) <= 0.05) break;
    gain *= std::pow(10.0, delta / 20.0);
    out.samples = w.samples;
    for (double& x : out.samples) x *= gain;
    measured = lufs_integrated(out);
    if (measured <= kLevelFloorDb) throw NumericalError("cannot normalize silence");
  }
  if (std::abs(measured - target_lufs) > 0.1) {
    throw NumericalError("lufs_normalize did not converge to target");
  }
  return out;
}

}  // namespace levelsep::dsp
