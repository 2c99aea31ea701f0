// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace flowgen {

// One-sided spectra of a real sequence under the unnormalized forward DFT
// F_k = sum_n x_n e^{-2*pi*i*k*n/L}, k = 0..floor(L/2). Direct evaluation;
// the series handled here are short daily profiles, not audio.

inline int one_sided_bins(int length) { return length / 2 + 1; }

// |F_k| for k = 0..floor(L/2).
std::vector<double> magnitude_spectrum(std::span<const double> x);

// |F_k|^2 for k = 0..floor(L/2).
std::vector<double> power_spectrum(std::span<const double> x);

// Pulls a cotangent on the magnitude spectrum back to the input:
// given w_k = dL/d|F_k|, returns dL/dx_n. Bins with |F_k| = 0 contribute
// nothing (subgradient 0 of the norm).
std::vector<double> magnitude_spectrum_backward(std::span<const double> x,
                                                std::span<const double> w);

}  // namespace flowgen
