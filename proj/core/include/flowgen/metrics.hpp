// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowgen {

using Series = std::vector<double>;
using SeriesSet = std::vector<Series>;

enum class MmdBandwidth { kMedianHeuristic, kFixed };
enum class DtwPairing { kIndexPaired, kNearest };

struct MetricConfig {
    int kl_bins = 50;
    double kl_epsilon = 1e-10;
    MmdBandwidth mmd_bandwidth = MmdBandwidth::kMedianHeuristic;
    double mmd_gamma = 1.0;  // used when mmd_bandwidth == kFixed
    double psdd_epsilon = 1e-12;
    DtwPairing dtw_pairing = DtwPairing::kIndexPaired;

    void validate() const;
};

struct MetricReport {
    double kl = 0.0;
    double mmd2 = 0.0;
    std::optional<double> fd;  // absent when a set has fewer than 2 samples
    double dtw_mean = 0.0;
    double psdd = 0.0;
    double marr_mean = 0.0;  // over the generated set
    MetricConfig config;
};

// Histogram KL(P||Q) of the pooled values on [0,1]: kl_bins equal bins,
// kl_epsilon added to every count before normalizing, natural log.
// Values outside [0,1] beyond 1e-9 raise std::domain_error.
double kl_divergence(const SeriesSet& real_set, const SeriesSet& gen_set,
                     const MetricConfig& cfg = {});

// Biased V-statistic (diagonal included) with RBF kernel
// k(a,b) = exp(-gamma * ||a-b||^2); gamma = 1/(2 * median^2) of pooled
// pairwise distances under the median heuristic, falling back to 1 when
// the median distance is zero.
double mmd2(const SeriesSet& real_set, const SeriesSet& gen_set, const MetricConfig& cfg = {});

// Frechet distance between Gaussian fits of the two sets, with each series
// acting as its own feature vector:
// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}).
double frechet_distance(const SeriesSet& real_set, const SeriesSet& gen_set);

// Classic dynamic-programming alignment with d(a,b) = |a-b| and steps
// {(i-1,j), (i,j-1), (i-1,j-1)}, anchored at both ends.
double dtw(std::span<const double> x, std::span<const double> y);

// Squared distance between the log of the epsilon-floored average one-sided
// power spectra of the two sets.
double psdd(const SeriesSet& real_set, const SeriesSet& gen_set, const MetricConfig& cfg = {});

// Mean absolute first difference.
double marr(std::span<const double> x);

MetricReport evaluate(const SeriesSet& real_set, const SeriesSet& gen_set,
                      const MetricConfig& cfg = {});

// CSV row round-trips losslessly at 17 significant digits; fd renders as
// "na" when absent.
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);
MetricReport metric_from_csv_row(const std::string& header, const std::string& row);

}  // namespace flowgen
