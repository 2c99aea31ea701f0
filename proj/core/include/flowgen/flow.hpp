// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowgen/mat.hpp"
#include "flowgen/net.hpp"
#include "flowgen/objective.hpp"

namespace flowgen {

// Linear interpolation state between a noise draw x0 and a clean sample x1.
struct FlowState {
    std::vector<double> x_t;
    double t = 0.0;
    std::vector<double> x_0;
    std::vector<double> x_1;
};

struct VelocityTarget {
    std::vector<double> v_t;  // x1 - x0, constant in t
};

// x_t = t*x1 + (1-t)*x0. Throws std::invalid_argument on length mismatch
// and std::domain_error when t is outside [0,1].
FlowState interpolate(std::span<const double> x0, std::span<const double> x1, double t);

VelocityTarget target_velocity(std::span<const double> x0, std::span<const double> x1);

enum class Optimizer { kSgd, kAdamW };
enum class LrSchedule { kConstant, kOneCycle };

struct TrainConfig {
    int epochs = 1;
    int batch_size = 16;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
    bool mgda_enabled = true;
    double static_lambda = 0.0;  // used only when mgda_enabled is false
    int ode_steps = 50;

    // Reference update rule is plain gradient descent on the combined
    // direction; the adaptive variant and the one-cycle schedule are opt-in.
    Optimizer optimizer = Optimizer::kSgd;
    LrSchedule lr_schedule = LrSchedule::kConstant;
    double weight_decay = 0.0;

    void validate() const;
};

// One conditioned training example: a clean series plus its text rows.
struct TrainExample {
    std::vector<double> series;
    Mat text;
    std::vector<std::uint8_t> mask;  // empty = all rows active
};

struct TrainResult {
    std::vector<LossReport> reports;
    std::string rng_state;  // training stream state after the last step
    std::size_t next_step = 0;
};

// Runs epochs * ceil(n/batch) update steps; each step draws batch indices,
// noise and times from a single seeded stream, so the whole trajectory is a
// pure function of (dataset, net, cfg). Throws TrainError at the first
// non-finite loss or gradient. `start_step`/`rng_state` continue a run
// restored from a checkpoint.
TrainResult train(std::span<const TrainExample> dataset, VelocityNet& net, const TrainConfig& cfg,
                  std::size_t start_step = 0, const std::string& rng_state = {});

// Euler integration over an arbitrary velocity field, x(0) ~ N(0, I):
// x_{k+1} = x_k + (1/steps) * field(x_k, k/steps). Throws NumericError if
// the state stops being finite.
using VelocityField =
    std::function<std::vector<double>(std::span<const double> x, double t)>;
std::vector<double> sample_field(const VelocityField& field, int length, int steps,
                                 std::uint64_t seed);

// Same integration with the trained estimator as the field.
std::vector<double> sample(const VelocityNet& net, const Mat& etxt,
                           std::span<const std::uint8_t> mask, int steps, std::uint64_t seed);

// Draws `count` independent samples for one embedding. Every sample owns a
// generator seeded from (seed, index), so the result is identical for any
// worker count.
std::vector<std::vector<double>> sample_many(const VelocityNet& net, const Mat& etxt,
                                             std::span<const std::uint8_t> mask, int count,
                                             int steps, std::uint64_t seed, int threads = 1);

}  // namespace flowgen
