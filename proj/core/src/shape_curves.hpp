// SPDX-License-Identifier: Apache-2.0
// Daily-profile primitives shared by the scenario generator and the judge
// rubric. Both sides must agree on these curves for the generator's own
// samples to score 5 against their metadata.
#pragma once

#include <cmath>

namespace flowgen::curves {

inline double step(double x, double center, double width) {
    return 1.0 / (1.0 + std::exp(-(x - center) / width));
}

inline double gauss(double x, double mu, double sigma) {
    const double d = (x - mu) / sigma;
    return std::exp(-0.5 * d * d);
}

// Smooth daylight window: zero at night, one over the solar day.
inline double pv_window(double tau) {
    return step(tau, 0.20, 0.03) * step(1.0 - tau, 1.0 - 0.82, 0.03);
}

inline constexpr double kPvDoublePeakOffset = 0.13;  // lobe half-spacing
inline constexpr double kMorningLobeTau = 0.32;      // residential morning bump

inline double pv_bell(double tau, double center, double sigma) {
    return pv_window(tau) * gauss(tau, center, sigma);
}

inline double load_plateau(double tau, double base) {
    return base + (1.0 - base) * step(tau, 0.30, 0.04) * step(1.0 - tau, 1.0 - 0.72, 0.05);
}

}  // namespace flowgen::curves
