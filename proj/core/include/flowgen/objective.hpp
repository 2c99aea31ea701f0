// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "flowgen/mat.hpp"

namespace flowgen {

struct VelocityNet;

// Per-step training record. `alpha` is empty when the static weighted sum
// is used instead of the Pareto weighting.
struct LossReport {
    std::size_t step = 0;
    double l_time = 0.0;
    double l_freq = 0.0;
    std::optional<double> alpha;
    double g_time_norm = 0.0;
    double g_freq_norm = 0.0;
};

// Mean squared error over elements.
double time_loss(std::span<const double> v_pred, std::span<const double> v_target);

// Mean absolute deviation between the one-sided magnitude spectra of the
// two sequences. Phase is ignored; the mean over bins keeps the scale
// independent of sequence length.
double freq_loss(std::span<const double> v_pred, std::span<const double> v_target);

// d freq_loss / d v_pred (v_target held fixed).
std::vector<double> freq_loss_backward(std::span<const double> v_pred,
                                       std::span<const double> v_target);

// Closed-form Pareto weight for two gradients:
//   alpha = clip((g_freq - g_time) . g_freq / ||g_time - g_freq||^2, 0, 1),
// the minimizer of ||alpha*g_time + (1-alpha)*g_freq||^2 over [0,1].
// Returns 0.5 when the gradients coincide (any alpha is optimal).
double mgda_alpha(std::span<const double> g_time, std::span<const double> g_freq);

std::vector<double> combine_gradients(std::span<const double> g_time,
                                      std::span<const double> g_freq, double alpha);

// One (state, target) pair for gradient verification.
struct GradCheckSample {
    std::vector<double> x_t;
    double t = 0.5;
    Mat text;  // [M x d_llm]
    std::vector<double> v_target;
};

// Compares backprop gradients of both losses against central finite
// differences, parameter by parameter. Returns the maximum relative error.
// Only sensible for small nets in double precision.
double grad_check(VelocityNet& net, const std::vector<GradCheckSample>& batch, double epsilon);

// One CSV line per training step; alpha renders empty under the static sum.
std::string loss_csv_header();
std::string loss_csv_row(const LossReport& r);

}  // namespace flowgen
