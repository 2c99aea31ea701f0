// SPDX-License-Identifier: Apache-2.0
#include "flowgen/objective.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowgen/dft.hpp"
#include "flowgen/net.hpp"

namespace flowgen {

double time_loss(std::span<const double> v_pred, std::span<const double> v_target) {
    if (v_pred.size() != v_target.size())
        throw std::invalid_argument("time_loss: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < v_pred.size(); ++i) {
        const double d = v_pred[i] - v_target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(v_pred.size());
}

double freq_loss(std::span<const double> v_pred, std::span<const double> v_target) {
    if (v_pred.size() != v_target.size())
        throw std::invalid_argument("freq_loss: length mismatch");
    if (v_pred.size() < 2) throw std::invalid_argument("freq_loss: need at least 2 samples");
    const auto ma = magnitude_spectrum(v_pred);
    const auto mb = magnitude_spectrum(v_target);
    double acc = 0.0;
    for (std::size_t k = 0; k < ma.size(); ++k) acc += std::abs(ma[k] - mb[k]);
    return acc / static_cast<double>(ma.size());
}

std::vector<double> freq_loss_backward(std::span<const double> v_pred,
                                       std::span<const double> v_target) {
    const auto ma = magnitude_spectrum(v_pred);
    const auto mb = magnitude_spectrum(v_target);
    std::vector<double> w(ma.size());
    const double inv_bins = 1.0 / static_cast<double>(ma.size());
    for (std::size_t k = 0; k < ma.size(); ++k) {
        const double d = ma[k] - mb[k];
        w[k] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_bins;
    }
    return magnitude_spectrum_backward(v_pred, w);
}

double mgda_alpha(std::span<const double> g_time, std::span<const double> g_freq) {
    if (g_time.size() != g_freq.size())
        throw std::invalid_argument("mgda_alpha: length mismatch");
    constexpr double kDenomEps = 1e-12;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g_time.size(); ++i) {
        const double diff = g_time[i] - g_freq[i];
        num += (g_freq[i] - g_time[i]) * g_freq[i];
        den += diff * diff;
    }
    if (den < kDenomEps) return 0.5;
    return std::clamp(num / den, 0.0, 1.0);
}

std::vector<double> combine_gradients(std::span<const double> g_time,
                                      std::span<const double> g_freq, double alpha) {
    if (g_time.size() != g_freq.size())
        throw std::invalid_argument("combine_gradients: length mismatch");
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("combine_gradients: alpha outside [0,1]");
    std::vector<double> d(g_time.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = alpha * g_time[i] + (1.0 - alpha) * g_freq[i];
    return d;
}

namespace {

std::pair<double, double> batch_losses(const VelocityNet& net,
                                       const std::vector<GradCheckSample>& batch, Trace& tr) {
    double lt = 0.0, lf = 0.0;
    for (const auto& s : batch) {
        const auto v = net.forward(s.x_t, s.t, s.text, {}, tr);
        lt += time_loss(v, s.v_target);
        lf += freq_loss(v, s.v_target);
    }
    const double b = static_cast<double>(batch.size());
    return {lt / b, lf / b};
}

}  // namespace

double grad_check(VelocityNet& net, const std::vector<GradCheckSample>& batch, double epsilon) {
    if (batch.empty()) throw std::invalid_argument("grad_check: empty batch");
    const double b = static_cast<double>(batch.size());
    const int length = net.cfg.length;

    // Analytic gradients: one forward per sample, two backward sweeps.
    std::vector<Trace> traces;
    std::vector<std::vector<double>> preds;
    traces.reserve(batch.size());
    for (const auto& s : batch) {
        traces.push_back(net.make_trace());
        preds.push_back(net.forward(s.x_t, s.t, s.text, {}, traces.back()));
    }
    net.params.zero_grads();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> dv(static_cast<std::size_t>(length));
        for (int j = 0; j < length; ++j)
            dv[j] = 2.0 * (preds[i][j] - batch[i].v_target[j]) / (b * length);
        net.backward(traces[i], dv);
    }
    std::vector<double> g_time;
    net.params.flatten_grads(g_time);
    net.params.zero_grads();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto dv = freq_loss_backward(preds[i], batch[i].v_target);
        for (auto& x : dv) x /= b;
        net.backward(traces[i], dv);
    }
    std::vector<double> g_freq;
    net.params.flatten_grads(g_freq);

    // Central finite differences, parameter by parameter.
    Trace scratch = net.make_trace();
    double max_rel = 0.0;
    std::size_t flat = 0;
    for (auto& p : net.params.items) {
        for (std::size_t i = 0; i < p.size(); ++i, ++flat) {
            const double orig = p.w[i];
            p.w[i] = orig + epsilon;
            const auto [ltp, lfp] = batch_losses(net, batch, scratch);
            p.w[i] = orig - epsilon;
            const auto [ltm, lfm] = batch_losses(net, batch, scratch);
            p.w[i] = orig;
            const double fd_t = (ltp - ltm) / (2.0 * epsilon);
            const double fd_f = (lfp - lfm) / (2.0 * epsilon);
            const double rel_t =
                std::abs(g_time[flat] - fd_t) / std::max({std::abs(g_time[flat]), std::abs(fd_t), 1e-6});
            const double rel_f =
                std::abs(g_freq[flat] - fd_f) / std::max({std::abs(g_freq[flat]), std::abs(fd_f), 1e-6});
            max_rel = std::max({max_rel, rel_t, rel_f});
        }
    }
    return max_rel;
}

std::string loss_csv_header() { return "step,l_time,l_freq,alpha,g_time_norm,g_freq_norm"; }

std::string loss_csv_row(const LossReport& r) {
    char buf[64];
    std::string row = std::to_string(r.step);
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        row += buf;
    };
    row += ',';
    put(r.l_time);
    row += ',';
    put(r.l_freq);
    row += ',';
    if (r.alpha) put(*r.alpha);
    row += ',';
    put(r.g_time_norm);
    row += ',';
    put(r.g_freq_norm);
    return row;
}

}  // namespace flowgen
