// SPDX-License-Identifier: Apache-2.0
#include "flowgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "flowgen/dft.hpp"
#include "flowgen/errors.hpp"

namespace flowgen {

void MetricConfig::validate() const {
    if (kl_bins < 2) throw std::invalid_argument("MetricConfig: kl_bins must be >= 2");
    if (kl_epsilon <= 0.0 || psdd_epsilon <= 0.0)
        throw std::invalid_argument("MetricConfig: epsilons must be > 0");
}

namespace {

void require_nonempty(const SeriesSet& a, const SeriesSet& b, const char* who) {
    if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty set");
}

std::vector<double> histogram(const SeriesSet& set, int bins, double eps) {
    std::vector<double> h(static_cast<std::size_t>(bins), eps);
    for (const auto& s : set)
        for (double v : s) {
            if (v < -1e-9 || v > 1.0 + 1e-9)
                throw std::domain_error("kl_divergence: value outside [0,1]");
            const double c = std::clamp(v, 0.0, 1.0);
            const int b = std::min(bins - 1, static_cast<int>(c * bins));
            h[static_cast<std::size_t>(b)] += 1.0;
        }
    const double total = std::accumulate(h.begin(), h.end(), 0.0);
    for (auto& x : h) x /= total;
    return h;
}

double sq_dist(const Series& a, const Series& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double median_pairwise_distance(const SeriesSet& x, const SeriesSet& y) {
    std::vector<const Series*> all;
    for (const auto& s : x) all.push_back(&s);
    for (const auto& s : y) all.push_back(&s);
    std::vector<double> d;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            d.push_back(std::sqrt(sq_dist(*all[i], *all[j])));
    if (d.empty()) return 0.0;
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return d[d.size() / 2];
}

double total_energy(const Series& s) {
    double acc = 0.0;
    for (double v : s) acc += v * v;
    return acc;
}

}  // namespace

double kl_divergence(const SeriesSet& real_set, const SeriesSet& gen_set,
                     const MetricConfig& cfg) {
    cfg.validate();
    require_nonempty(real_set, gen_set, "kl_divergence");
    const auto p = histogram(real_set, cfg.kl_bins, cfg.kl_epsilon);
    const auto q = histogram(gen_set, cfg.kl_bins, cfg.kl_epsilon);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
    return kl;
}

double mmd2(const SeriesSet& real_set, const SeriesSet& gen_set, const MetricConfig& cfg) {
    require_nonempty(real_set, gen_set, "mmd2");
    double gamma = cfg.mmd_gamma;
    if (cfg.mmd_bandwidth == MmdBandwidth::kMedianHeuristic) {
        const double med = median_pairwise_distance(real_set, gen_set);
        gamma = med > 0.0 ? 1.0 / (2.0 * med * med) : 1.0;
    }
    auto k = [gamma](const Series& a, const Series& b) { return std::exp(-gamma * sq_dist(a, b)); };
    const double m = static_cast<double>(real_set.size());
    const double n = static_cast<double>(gen_set.size());
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (const auto& a : real_set)
        for (const auto& b : real_set) kxx += k(a, b);
    for (const auto& a : gen_set)
        for (const auto& b : gen_set) kyy += k(a, b);
    for (const auto& a : real_set)
        for (const auto& b : gen_set) kxy += k(a, b);
    return kxx / (m * m) + kyy / (n * n) - 2.0 * kxy / (m * n);
}

double frechet_distance(const SeriesSet& real_set, const SeriesSet& gen_set) {
    if (real_set.size() < 2 || gen_set.size() < 2)
        throw std::invalid_argument("frechet_distance: need at least 2 samples per set");
    const int d = static_cast<int>(real_set.front().size());

    auto moments = [d](const SeriesSet& set) {
        const int n = static_cast<int>(set.size());
        Eigen::MatrixXd x(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) x(i, j) = set[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        Eigen::VectorXd mu = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
        return std::make_pair(mu, cov);
    };

    const auto [mu_r, cov_r] = moments(real_set);
    const auto [mu_g, cov_g] = moments(gen_set);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_r(cov_r);
    if (es_r.info() != Eigen::Success) throw NumericError("frechet_distance: eigensolve failed");
    Eigen::VectorXd ev = es_r.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd sqrt_r = es_r.eigenvectors() * ev.asDiagonal() * es_r.eigenvectors().transpose();

    // Tr((S_r S_g)^{1/2}) via the symmetric product S_r^{1/2} S_g S_r^{1/2}
    Eigen::MatrixXd inner = sqrt_r * cov_g * sqrt_r;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner);
    if (es_i.info() != Eigen::Success) throw NumericError("frechet_distance: eigensolve failed");
    const double tr_sqrt = es_i.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (mu_r - mu_g).squaredNorm();
    return mean_term + cov_r.trace() + cov_g.trace() - 2.0 * tr_sqrt;
}

double dtw(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw std::invalid_argument("dtw: empty sequence");
    const std::size_t n = x.size(), m = y.size();
    constexpr double kInf = 1e300;
    std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = kInf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double cost = std::abs(x[i - 1] - y[j - 1]);
            cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double psdd(const SeriesSet& real_set, const SeriesSet& gen_set, const MetricConfig& cfg) {
    cfg.validate();
    require_nonempty(real_set, gen_set, "psdd");
    const std::size_t len = real_set.front().size();
    auto mean_power = [&](const SeriesSet& set) {
        std::vector<double> acc(static_cast<std::size_t>(one_sided_bins(static_cast<int>(len))), 0.0);
        for (const auto& s : set) {
            if (s.size() != len) throw std::invalid_argument("psdd: length mismatch");
            const auto p = power_spectrum(s);
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += p[k];
        }
        for (auto& v : acc) v /= static_cast<double>(set.size());
        return acc;
    };
    for (const auto& s : gen_set)
        if (s.size() != len) throw std::invalid_argument("psdd: length mismatch");
    const auto pr = mean_power(real_set);
    const auto pg = mean_power(gen_set);
    double acc = 0.0;
    for (std::size_t k = 0; k < pr.size(); ++k) {
        const double d = std::log(pr[k] + cfg.psdd_epsilon) - std::log(pg[k] + cfg.psdd_epsilon);
        acc += d * d;
    }
    return acc;
}

double marr(std::span<const double> x) {
    if (x.size() < 2) throw std::invalid_argument("marr: need at least 2 points");
    double acc = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) acc += std::abs(x[i] - x[i - 1]);
    return acc / static_cast<double>(x.size() - 1);
}

MetricReport evaluate(const SeriesSet& real_set, const SeriesSet& gen_set,
                      const MetricConfig& cfg) {
    require_nonempty(real_set, gen_set, "evaluate");
    MetricReport r;
    r.config = cfg;
    r.kl = kl_divergence(real_set, gen_set, cfg);
    r.mmd2 = mmd2(real_set, gen_set, cfg);
    if (real_set.size() >= 2 && gen_set.size() >= 2)
        r.fd = frechet_distance(real_set, gen_set);

    if (cfg.dtw_pairing == DtwPairing::kIndexPaired) {
        // rank-pair by total energy
        auto order = [](const SeriesSet& s) {
            std::vector<std::size_t> idx(s.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return total_energy(s[a]) < total_energy(s[b]);
            });
            return idx;
        };
        const auto ir = order(real_set);
        const auto ig = order(gen_set);
        const std::size_t n = std::min(ir.size(), ig.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += dtw(real_set[ir[i]], gen_set[ig[i]]);
        r.dtw_mean = acc / static_cast<double>(n);
    } else {
        double acc = 0.0;
        for (const auto& g : gen_set) {
            std::size_t best = 0;
            double best_d = sq_dist(g, real_set[0]);
            for (std::size_t i = 1; i < real_set.size(); ++i) {
                const double d = sq_dist(g, real_set[i]);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            acc += dtw(real_set[best], g);
        }
        r.dtw_mean = acc / static_cast<double>(gen_set.size());
    }

    r.psdd = psdd(real_set, gen_set, cfg);
    double macc = 0.0;
    for (const auto& g : gen_set) macc += marr(g);
    r.marr_mean = macc / static_cast<double>(gen_set.size());
    return r;
}

std::string metric_csv_header() { return "kl,mmd2,fd,dtw_mean,psdd,marr_mean"; }

std::string metric_csv_row(const MetricReport& r) {
    char buf[64];
    std::string row;
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        row += buf;
    };
    put(r.kl);
    row += ',';
    put(r.mmd2);
    row += ',';
    if (r.fd)
        put(*r.fd);
    else
        row += "na";
    row += ',';
    put(r.dtw_mean);
    row += ',';
    put(r.psdd);
    row += ',';
    put(r.marr_mean);
    return row;
}

MetricReport metric_from_csv_row(const std::string& header, const std::string& row) {
    if (header != metric_csv_header()) throw FormatError("metrics csv: unexpected header");
    MetricReport r;
    std::stringstream ss(row);
    std::string field;
    auto next = [&]() {
        if (!std::getline(ss, field, ',')) throw FormatError("metrics csv: truncated row");
        return field;
    };
    r.kl = std::stod(next());
    r.mmd2 = std::stod(next());
    const std::string fd = next();
    if (fd != "na") r.fd = std::stod(fd);
    r.dtw_mean = std::stod(next());
    r.psdd = std::stod(next());
    r.marr_mean = std::stod(next());
    return r;
}

}  // namespace flowgen
