// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_DSP_HPP
#define LEVELSEP_DSP_HPP

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "levelsep/common.hpp"

namespace levelsep::dsp {

// Mono audio at a fixed rate. Samples are nominally in [-1, 1] full scale
// but may exceed it transiently after mixing; nothing here ever clips.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  Waveform() = default;
  Waveform(std::vector<double> s, int sr) : samples(std::move(s)), sample_rate(sr) {}
  std::size_t size() const { return samples.size(); }
};

enum class WindowKind { SqrtHann };

struct StftConfig {
  int n_fft = 512;
  int hop = 128;
  WindowKind window = WindowKind::SqrtHann;

  // n_fft must be a power of two (radix-2 transform) and hop must divide
  // n_fft so the square-root Hann analysis/synthesis pair satisfies COLA.
  void validate() const;
  int n_bins() const { return n_fft / 2 + 1; }
  // T = 1 + floor((len - n_fft)/hop), frames fully inside the signal.
  std::size_t frame_count(std::size_t len) const;
};

struct ComplexSpectrogram {
  // bins: F x T row-major, F = n_fft/2 + 1.
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> bins;
  StftConfig config;
  int sample_rate = 0;

  std::complex<double>& at(std::size_t f, std::size_t t) { return bins[f * cols + t]; }
  std::complex<double> at(std::size_t f, std::size_t t) const { return bins[f * cols + t]; }
};

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);
Waveform istft(const ComplexSpectrogram& s);

Mat magnitude(const ComplexSpectrogram& s);

// 20*log10(max(|bin|, floor)) rescaled affinely to [0, 1] per clip, where
// the floor sits floor_db below the clip's max magnitude. An all-zero
// spectrogram maps to all zeros.
Mat log_magnitude(const ComplexSpectrogram& s, double floor_db = -80.0);
// Same mapping applied to an already-computed magnitude matrix.
Mat log_magnitude_of(const Mat& mag, double floor_db = -80.0);

// ISTFT of (mask .* |mix|) with the mixture phase.
Waveform reconstruct_source(const Mat& mask, const ComplexSpectrogram& mix);

// Half-open sample range [lo, hi) where every sample is covered by the full
// n_fft/hop overlapping frames. Metrics and round-trip identities are
// evaluated on this interior region.
std::pair<std::size_t, std::size_t> interior_range(const StftConfig& cfg, std::size_t len);

inline constexpr double kLevelFloorDb = -120.0;

// RMS convention: full-scale square wave = 0 dBFS. Silence reports the
// -120 dBFS floor.
double dbfs(const Waveform& w);

// BS.1770-4 integrated loudness: K-weighting, 400 ms blocks with 75%
// overlap, -70 LUFS absolute gate then -10 LU relative gate. Fully gated
// silence reports -120. Supported rates: 8000, 16000, 44100, 48000.
double lufs_integrated(const Waveform& w);

// Scalar gain so the result measures target +/- 0.1 LU.
Waveform lufs_normalize(const Waveform& w, double target_lufs);

namespace detail {
// In-place radix-2 FFT over a power-of-two length buffer; inverse omits the
// 1/N scaling. Exposed for procedural signal synthesis and tests.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse);

// The two K-weighting biquads (high shelf, then high pass), normalized
// coefficients {b0,b1,b2,a1,a2}. Exposed for tests.
struct Biquad {
  double b0, b1, b2, a1, a2;
};
Biquad k_shelf(double sample_rate);
Biquad k_highpass(double sample_rate);
std::vector<double> biquad_filter(const Biquad& q, const std::vector<double>& x);
}  // namespace detail

}  // namespace levelsep::dsp

#endif  // LEVELSEP_DSP_HPP
