// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_TFAGG_HPP
#define LEVELSEP_TFAGG_HPP

#include <string>
#include <vector>

#include "levelsep/common.hpp"

namespace levelsep::tfagg {

enum class BankKind { Linear, Mel };
enum class AggKind { Identity, Sum };

// Filter bank matrix A (n_bands x F). The linear bank is the F x F identity
// and is stored implicitly (empty weights).
struct FilterBank {
  BankKind kind = BankKind::Linear;
  std::size_t n_bands = 0;  // rows of A
  std::size_t n_freq = 0;   // columns of A (= F)
  Mat weights;              // empty for the linear bank

  bool is_identity() const { return kind == BankKind::Linear; }
};

FilterBank linear_filterbank(int n_fft);

// HTK-style triangular mel filters, peak 1, band centers uniformly spaced in
// mel between 0 and Nyquist. Shape (n_bands, n_fft/2 + 1).
FilterBank mel_filterbank(int n_fft, int n_bands, int sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// One aggregation parameterization: output of apply() is
// (freq_agg == Sum ? 1 : n_bands) x (time_agg == Sum ? 1 : T).
struct AggregationSpec {
  FilterBank filter_bank;
  AggKind freq_agg = AggKind::Identity;
  AggKind time_agg = AggKind::Identity;
  std::string name;

  std::size_t out_rows() const { return freq_agg == AggKind::Sum ? 1 : filter_bank.n_bands; }
  std::size_t out_cols(std::size_t t) const { return time_agg == AggKind::Sum ? 1 : t; }
};

// B_L * A * E * B_R with identity aggregators as identity matrices and sum
// aggregators as all-ones vectors. Linear in E; preserves nonnegativity.
Mat apply_aggregation(const AggregationSpec& spec, const Mat& e);

struct AggregationSet {
  std::vector<AggregationSpec> specs;
};

// The multi-resolution set used by default: time-frequency on the mel bank,
// spectrum on the mel bank, and global on the linear bank.
AggregationSet standard_set(const FilterBank& mel_bank, const FilterBank& linear_bank);

// Build a spec from its configuration name: "tf-mel", "tf-linear",
// "spectrum-mel", "spectrum-linear", "global" (global implies linear).
AggregationSpec spec_by_name(const std::string& name, const FilterBank& mel_bank,
                             const FilterBank& linear_bank);

AggregationSet set_by_names(const std::vector<std::string>& names, const FilterBank& mel_bank,
                            const FilterBank& linear_bank);

}  // namespace levelsep::tfagg

#endif  // LEVELSEP_TFAGG_HPP
