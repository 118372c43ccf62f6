// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/tfagg.hpp"

#include <cmath>
#include <set>

namespace levelsep::tfagg {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FilterBank linear_filterbank(int n_fft) {
  FilterBank fb;
  fb.kind = BankKind::Linear;
  fb.n_bands = static_cast<std::size_t>(n_fft / 2 + 1);
  fb.n_freq = fb.n_bands;
  return fb;
}

FilterBank mel_filterbank(int n_fft, int n_bands, int sample_rate) {
  if (n_bands < 2) throw ConfigError("mel_filterbank: n_bands must be >= 2");
  if (n_fft % 2 != 0) throw ConfigError("mel_filterbank: n_fft must be even");
  const std::size_t n_freq = static_cast<std::size_t>(n_fft / 2 + 1);
  if (static_cast<std::size_t>(n_bands) > n_freq) {
    throw ConfigError("mel_filterbank: more bands than frequency bins");
  }

  const double nyquist = sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  // n_bands + 2 edge points; band b is the triangle over edges (b, b+1, b+2)
  std::vector<double> edge_hz(static_cast<std::size_t>(n_bands) + 2);
  for (std::size_t i = 0; i < edge_hz.size(); ++i) {
    edge_hz[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(n_bands + 1));
  }

  FilterBank fb;
  fb.kind = BankKind::Mel;
  fb.n_bands = static_cast<std::size_t>(n_bands);
  fb.n_freq = n_freq;
  fb.weights = Mat(fb.n_bands, n_freq, 0.0);

  for (std::size_t b = 0; b < fb.n_bands; ++b) {
    const double lo = edge_hz[b], center = edge_hz[b + 1], hi = edge_hz[b + 2];
    bool any = false;
    for (std::size_t k = 0; k < n_freq; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f < hi) {
        w = f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
      }
      fb.weights.at(b, k) = w;
      any = any || w > 0.0;
    }
    if (!any) {
      throw ConfigError("mel_filterbank: band " + std::to_string(b) +
                        " covers no bins; reduce n_bands");
    }
  }
  return fb;
}

Mat apply_aggregation(const AggregationSpec& spec, const Mat& e) {
  if (e.rows != spec.filter_bank.n_freq) {
    throw NumericalError("apply_aggregation: E has " + std::to_string(e.rows) +
                         " rows, filter bank expects " + std::to_string(spec.filter_bank.n_freq));
  }
  // A * E
  Mat banked = spec.filter_bank.is_identity() ? e : matmul(spec.filter_bank.weights, e);

  const std::size_t rows_out = spec.out_rows();
  const std::size_t cols_out = spec.out_cols(e.cols);
  Mat out(rows_out, cols_out, 0.0);
  for (std::size_t r = 0; r < banked.rows; ++r) {
    for (std::size_t c = 0; c < banked.cols; ++c) {
      const std::size_t ro = spec.freq_agg == AggKind::Sum ? 0 : r;
      const std::size_t co = spec.time_agg == AggKind::Sum ? 0 : c;
      out.at(ro, co) += banked.at(r, c);
    }
  }
  return out;
}

AggregationSet standard_set(const FilterBank& mel_bank, const FilterBank& linear_bank) {
  AggregationSet set;
  set.specs.push_back({mel_bank, AggKind::Identity, AggKind::Identity, "tf-mel"});
  set.specs.push_back({mel_bank, AggKind::Identity, AggKind::Sum, "spectrum-mel"});
  // the global spec always uses the linear bank
  set.specs.push_back({linear_bank, AggKind::Sum, AggKind::Sum, "global"});
  return set;
}

AggregationSpec spec_by_name(const std::string& name, const FilterBank& mel_bank,
                             const FilterBank& linear_bank) {
  if (name == "tf-mel") return {mel_bank, AggKind::Identity, AggKind::Identity, name};
  if (name == "tf-linear") return {linear_bank, AggKind::Identity, AggKind::Identity, name};
  if (name == "spectrum-mel") return {mel_bank, AggKind::Identity, AggKind::Sum, name};
  if (name == "spectrum-linear") return {linear_bank, AggKind::Identity, AggKind::Sum, name};
  if (name == "global") return {linear_bank, AggKind::Sum, AggKind::Sum, name};
  throw ConfigError("unknown aggregation name: " + name);
}

AggregationSet set_by_names(const std::vector<std::string>& names, const FilterBank& mel_bank,
                            const FilterBank& linear_bank) {
  if (names.empty()) throw ConfigError("aggregation set must be nonempty");
  std::set<std::string> seen;
  AggregationSet set;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw ConfigError("duplicate aggregation name: " + n);
    set.specs.push_back(spec_by_name(n, mel_bank, linear_bank));
  }
  return set;
}

}  // namespace levelsep::tfagg
