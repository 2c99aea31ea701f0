// SPDX-License-Identifier: Apache-2.0
#include "flowgen/judge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowgen/metrics.hpp"
#include "shape_curves.hpp"

namespace flowgen {

namespace {

int peak_band(double delta) {
    const double d = std::abs(delta);
    if (d <= 0.05) return 5;
    if (d <= 0.10) return 4;
    if (d <= 0.20) return 3;
    if (d <= 0.35) return 2;
    return 1;
}

int volatility_band(Volatility measured, Volatility target) {
    const int d = std::abs(static_cast<int>(measured) - static_cast<int>(target));
    if (d == 0) return 5;
    if (d == 1) return 3;
    return 1;
}

int shape_band(double corr) {
    if (corr >= 0.70) return 5;
    if (corr >= 0.50) return 4;
    if (corr >= 0.30) return 3;
    if (corr >= 0.15) return 2;
    return 1;
}

int event_band(double depth_ratio) {
    if (depth_ratio >= 0.25) return 5;
    if (depth_ratio >= 0.15) return 4;
    if (depth_ratio >= 0.08) return 3;
    if (depth_ratio >= 0.03) return 2;
    return 1;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// Dip depth near `at`, relative to the level interpolated from the window
// edges. Window is +/-3 steps; edges one step beyond it.
double event_depth_ratio(std::span<const double> x, int at) {
    const int n = static_cast<int>(x.size());
    const int lo = std::max(0, at - 3);
    const int hi = std::min(n - 1, at + 3);
    double inside = x[static_cast<std::size_t>(lo)];
    for (int i = lo; i <= hi; ++i) inside = std::min(inside, x[static_cast<std::size_t>(i)]);
    const int el = std::max(0, at - 4);
    const int er = std::min(n - 1, at + 4);
    const double baseline = 0.5 * (x[static_cast<std::size_t>(el)] + x[static_cast<std::size_t>(er)]);
    if (baseline <= 1e-9) return 0.0;
    return std::max(0.0, (baseline - inside) / baseline);
}

}  // namespace

std::vector<double> shape_template(Kind kind, ShapeClass shape, int peak_index, int length) {
    std::vector<double> t(static_cast<std::size_t>(length));
    const double tau_pk = (peak_index + 0.5) / length;
    for (int i = 0; i < length; ++i) {
        const double tau = (i + 0.5) / length;
        double v = 0.0;
        switch (shape) {
            case ShapeClass::kBell:
                v = curves::pv_bell(tau, tau_pk, 0.12);
                break;
            case ShapeClass::kDoublePeak:
                if (kind == Kind::kPv) {
                    const double second = tau_pk > 0.5 ? tau_pk - 2.0 * curves::kPvDoublePeakOffset
                                                       : tau_pk + 2.0 * curves::kPvDoublePeakOffset;
                    v = curves::pv_bell(tau, tau_pk, 0.09) +
                        0.75 * curves::pv_bell(tau, second, 0.09);
                } else {
                    v = 0.28 + curves::gauss(tau, tau_pk, 0.06) +
                        0.70 * curves::gauss(tau, curves::kMorningLobeTau, 0.06);
                }
                break;
            case ShapeClass::kPlateau:
                v = curves::load_plateau(tau, 0.22);
                break;
            case ShapeClass::kEveningPeak:
                v = 0.28 + curves::gauss(tau, tau_pk, 0.06) +
                    0.42 * curves::gauss(tau, curves::kMorningLobeTau, 0.05);
                break;
        }
        t[static_cast<std::size_t>(i)] = v;
    }
    return t;
}

JudgeVerdict judge(std::span<const double> x, Kind kind, const Metadata& target) {
    if (x.size() < 8) throw std::invalid_argument("judge: series too short");
    const int n = static_cast<int>(x.size());
    if (target.peak_time_index < 0 || target.peak_time_index >= n)
        throw std::invalid_argument("judge: peak index outside the series");

    JudgeVerdict v;
    char buf[160];

    const double measured_peak = *std::max_element(x.begin(), x.end());
    v.peak_score = peak_band(measured_peak - target.peak);
    std::snprintf(buf, sizeof(buf), "peak %.3f vs target %.3f -> %d", measured_peak, target.peak,
                  *v.peak_score);
    v.justification = buf;

    const double m = marr(x);
    const Volatility cls = marr_class(m);
    v.volatility_score = volatility_band(cls, target.volatility);
    std::snprintf(buf, sizeof(buf), "; marr %.4f (%s) vs %s -> %d", m, to_string(cls).c_str(),
                  to_string(target.volatility).c_str(), *v.volatility_score);
    v.justification += buf;

    const auto tmpl = shape_template(kind, target.shape, target.peak_time_index, n);
    const double corr = pearson(x, tmpl);
    v.shape_score = shape_band(corr);
    std::snprintf(buf, sizeof(buf), "; shape corr %.3f (%s) -> %d", corr,
                  to_string(target.shape).c_str(), *v.shape_score);
    v.justification += buf;

    if (target.event) {
        const double depth = event_depth_ratio(x, target.event->dip_at);
        v.event_score = event_band(depth);
        std::snprintf(buf, sizeof(buf), "; dip depth %.2f at %s -> %d", depth,
                      clock_string(target.event->dip_at, n).c_str(), *v.event_score);
        v.justification += buf;
    }

    int sum = *v.peak_score + *v.volatility_score + *v.shape_score;
    int cnt = 3;
    if (v.event_score) {
        sum += *v.event_score;
        ++cnt;
    }
    v.score = static_cast<int>(std::lround(static_cast<double>(sum) / cnt));
    return v;
}

double mjas(const std::vector<JudgedSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("mjas: empty sample list");
    double acc = 0.0;
    for (const auto& s : samples) acc += judge(s.series, s.kind, s.target).score;
    return acc / static_cast<double>(samples.size());
}

JudgeVerdict RuleJudge::score(std::span<const double> x, Kind kind, const Metadata& target) const {
    return judge(x, kind, target);
}

}  // namespace flowgen
