// SPDX-License-Identifier: Apache-2.0
#include "flowgen/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "flowgen/errors.hpp"
#include "flowgen/rng.hpp"

namespace flowgen {

FlowState interpolate(std::span<const double> x0, std::span<const double> x1, double t) {
    if (x0.size() != x1.size()) throw std::invalid_argument("interpolate: length mismatch");
    if (t < 0.0 || t > 1.0) throw std::domain_error("interpolate: t outside [0,1]");
    FlowState s;
    s.t = t;
    s.x_0.assign(x0.begin(), x0.end());
    s.x_1.assign(x1.begin(), x1.end());
    s.x_t.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) s.x_t[i] = t * x1[i] + (1.0 - t) * x0[i];
    return s;
}

VelocityTarget target_velocity(std::span<const double> x0, std::span<const double> x1) {
    if (x0.size() != x1.size()) throw std::invalid_argument("target_velocity: length mismatch");
    VelocityTarget v;
    v.v_t.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) v.v_t[i] = x1[i] - x0[i];
    return v;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    if (static_lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (ode_steps < 1) throw std::invalid_argument("TrainConfig: ode_steps must be >= 1");
}

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total) {
    if (cfg.lr_schedule == LrSchedule::kConstant) return cfg.learning_rate;
    // One-cycle: linear warmup over the first 30%, cosine decay after.
    const double peak = cfg.learning_rate;
    const double warm = 0.3 * static_cast<double>(total);
    const double s = static_cast<double>(step);
    if (s < warm) return peak * (0.04 + 0.96 * s / warm);
    const double p = (s - warm) / std::max(1.0, static_cast<double>(total) - warm);
    return peak * (1e-4 + (1.0 - 1e-4) * 0.5 * (1.0 + std::cos(M_PI * p)));
}

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;
};

void adamw_step(ParamStore& ps, std::span<const double> dir, double lr, double weight_decay,
                AdamState& st) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (st.m.empty()) {
        st.m.assign(dir.size(), 0.0);
        st.v.assign(dir.size(), 0.0);
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    std::size_t k = 0;
    for (auto& p : ps.items)
        for (double& w : p.w) {
            st.m[k] = b1 * st.m[k] + (1.0 - b1) * dir[k];
            st.v[k] = b2 * st.v[k] + (1.0 - b2) * dir[k] * dir[k];
            const double mhat = st.m[k] / c1;
            const double vhat = st.v[k] / c2;
            w -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w);
            ++k;
        }
}

}  // namespace

TrainResult train(std::span<const TrainExample> dataset, VelocityNet& net, const TrainConfig& cfg,
                  std::size_t start_step, const std::string& rng_state) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    const int length = net.cfg.length;
    for (const auto& ex : dataset)
        if (static_cast<int>(ex.series.size()) != length)
            throw std::invalid_argument("train: series length does not match the net");

    const std::size_t n = dataset.size();
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const std::size_t total = static_cast<std::size_t>(cfg.epochs) * steps_per_epoch;

    Rng rng(cfg.seed);
    if (!rng_state.empty()) rng.load_state(rng_state);

    TrainResult result;
    result.reports.reserve(total);
    AdamState adam;

    std::vector<Trace> traces(batch);
    for (auto& tr : traces) tr = net.make_trace();
    std::vector<std::vector<double>> preds(batch), targets(batch);
    std::vector<double> g_time, g_freq;

    for (std::size_t local = 0; local < total; ++local) {
        const std::size_t step = start_step + local;

        double l_time = 0.0, l_freq = 0.0;
        std::vector<const TrainExample*> picked(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            const TrainExample& ex = dataset[rng.below(n)];
            picked[b] = &ex;
            const double t = rng.uniform();
            const auto x0 = rng.normal_vec(static_cast<std::size_t>(length));
            FlowState fs = interpolate(x0, ex.series, t);
            targets[b] = target_velocity(x0, ex.series).v_t;
            preds[b] = net.forward(fs.x_t, t, ex.text, ex.mask, traces[b]);
            l_time += time_loss(preds[b], targets[b]);
            l_freq += freq_loss(preds[b], targets[b]);
        }
        const double bsz = static_cast<double>(batch);
        l_time /= bsz;
        l_freq /= bsz;
        if (!std::isfinite(l_time) || !std::isfinite(l_freq))
            throw TrainError(step, "non-finite loss");

        net.params.zero_grads();
        for (std::size_t b = 0; b < batch; ++b) {
            std::vector<double> dv(static_cast<std::size_t>(length));
            for (int j = 0; j < length; ++j)
                dv[j] = 2.0 * (preds[b][j] - targets[b][j]) / (bsz * length);
            net.backward(traces[b], dv);
        }
        net.params.flatten_grads(g_time);

        net.params.zero_grads();
        for (std::size_t b = 0; b < batch; ++b) {
            auto dv = freq_loss_backward(preds[b], targets[b]);
            for (auto& x : dv) x /= bsz;
            net.backward(traces[b], dv);
        }
        net.params.flatten_grads(g_freq);

        if (!all_finite(g_time) || !all_finite(g_freq))
            throw TrainError(step, "non-finite gradient");

        LossReport rep;
        rep.step = step;
        rep.l_time = l_time;
        rep.l_freq = l_freq;
        rep.g_time_norm = l2_norm(g_time);
        rep.g_freq_norm = l2_norm(g_freq);

        std::vector<double> dir(g_time.size());
        if (cfg.mgda_enabled) {
            const double alpha = mgda_alpha(g_time, g_freq);
            rep.alpha = alpha;
            for (std::size_t i = 0; i < dir.size(); ++i)
                dir[i] = alpha * g_time[i] + (1.0 - alpha) * g_freq[i];
        } else {
            for (std::size_t i = 0; i < dir.size(); ++i)
                dir[i] = g_time[i] + cfg.static_lambda * g_freq[i];
        }

        const double lr = scheduled_lr(cfg, local, total);
        if (cfg.optimizer == Optimizer::kSgd) {
            net.params.apply_step(dir, lr);
        } else {
            adamw_step(net.params, dir, lr, cfg.weight_decay, adam);
        }
        result.reports.push_back(std::move(rep));
    }

    result.rng_state = rng.save_state();
    result.next_step = start_step + total;
    return result;
}

std::vector<double> sample_field(const VelocityField& field, int length, int steps,
                                 std::uint64_t seed) {
    if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
    Rng rng(seed);
    std::vector<double> x = rng.normal_vec(static_cast<std::size_t>(length));
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const auto v = field(x, t);
        for (int i = 0; i < length; ++i) x[static_cast<std::size_t>(i)] += dt * v[static_cast<std::size_t>(i)];
        if (!all_finite(x)) throw NumericError("sample: non-finite state at step " + std::to_string(k));
    }
    return x;
}

std::vector<double> sample(const VelocityNet& net, const Mat& etxt,
                           std::span<const std::uint8_t> mask, int steps, std::uint64_t seed) {
    if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
    Rng rng(seed);
    std::vector<double> x = rng.normal_vec(static_cast<std::size_t>(net.cfg.length));
    Trace tr = net.make_trace();
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const auto v = net.forward(x, t, etxt, mask, tr);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
        if (!all_finite(x)) throw NumericError("sample: non-finite state at step " + std::to_string(k));
    }
    return x;
}

std::vector<std::vector<double>> sample_many(const VelocityNet& net, const Mat& etxt,
                                             std::span<const std::uint8_t> mask, int count,
                                             int steps, std::uint64_t seed, int threads) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(count));
    auto worker = [&](int begin, int end) {
        for (int i = begin; i < end; ++i)
            out[static_cast<std::size_t>(i)] =
                sample(net, etxt, mask, steps, splitmix64(seed + static_cast<std::uint64_t>(i)));
    };
    threads = std::clamp(threads, 1, count > 0 ? count : 1);
    if (threads == 1) {
        worker(0, count);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (count + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            const int b = w * chunk;
            const int e = std::min(count, b + chunk);
            if (b < e) pool.emplace_back(worker, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace flowgen
