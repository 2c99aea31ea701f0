// SPDX-License-Identifier: Apache-2.0
#include "flowgen/dft.hpp"

#include <cmath>

namespace flowgen {

namespace {

struct Spectrum {
    std::vector<double> re, im;
};

Spectrum dft_one_sided(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    const int bins = one_sided_bins(n);
    Spectrum s;
    s.re.assign(bins, 0.0);
    s.im.assign(bins, 0.0);
    const double w = 2.0 * M_PI / n;
    for (int k = 0; k < bins; ++k) {
        double re = 0.0, im = 0.0;
        for (int j = 0; j < n; ++j) {
            const double a = w * k * j;
            re += x[j] * std::cos(a);
            im -= x[j] * std::sin(a);
        }
        s.re[k] = re;
        s.im[k] = im;
    }
    return s;
}

}  // namespace

std::vector<double> magnitude_spectrum(std::span<const double> x) {
    Spectrum s = dft_one_sided(x);
    std::vector<double> mag(s.re.size());
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(s.re[k], s.im[k]);
    return mag;
}

std::vector<double> power_spectrum(std::span<const double> x) {
    Spectrum s = dft_one_sided(x);
    std::vector<double> p(s.re.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = s.re[k] * s.re[k] + s.im[k] * s.im[k];
    return p;
}

std::vector<double> magnitude_spectrum_backward(std::span<const double> x,
                                                std::span<const double> w) {
    const int n = static_cast<int>(x.size());
    Spectrum s = dft_one_sided(x);
    const int bins = static_cast<int>(s.re.size());
    std::vector<double> dx(n, 0.0);
    const double step = 2.0 * M_PI / n;
    for (int k = 0; k < bins; ++k) {
        const double mag = std::hypot(s.re[k], s.im[k]);
        if (mag == 0.0 || w[k] == 0.0) continue;
        const double cr = w[k] * s.re[k] / mag;
        const double ci = w[k] * s.im[k] / mag;
        for (int j = 0; j < n; ++j) {
            const double a = step * k * j;
            // dRe_k/dx_j = cos(a), dIm_k/dx_j = -sin(a)
            dx[j] += cr * std::cos(a) - ci * std::sin(a);
        }
    }
    return dx;
}

}  // namespace flowgen
