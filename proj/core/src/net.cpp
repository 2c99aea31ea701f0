// SPDX-License-Identifier: Apache-2.0
#include "flowgen/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowgen {

namespace {

constexpr double kNormEps = 1e-5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double uniform_sym(Rng& rng, double scale) { return (2.0 * rng.uniform() - 1.0) * scale; }

void init_uniform(Param& p, Rng& rng, int fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& w : p.w) w = uniform_sym(rng, s);
}

Mat concat_channels(const Mat& a, const Mat& b) {
    Mat out(a.rows + b.rows, a.cols);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

}  // namespace

void NetConfig::validate() const {
    if (levels() < 1) throw std::invalid_argument("NetConfig: need at least one level");
    if (base_channels < 1 || groups < 1 || d_llm < 1 || d_k < 1 || length < 2)
        throw std::invalid_argument("NetConfig: non-positive dimension");
    if (base_channels % groups != 0)
        throw std::invalid_argument("NetConfig: base_channels must be divisible by groups");
    for (int m : channel_multipliers)
        if (m < 1) throw std::invalid_argument("NetConfig: channel multiplier must be positive");
    const int div = 1 << (levels() - 1);
    if (length % div != 0)
        throw std::invalid_argument("NetConfig: length " + std::to_string(length) +
                                    " not divisible by 2^(levels-1) = " + std::to_string(div));
    for (int l : attention_levels)
        if (l < 0 || l >= levels())
            throw std::invalid_argument("NetConfig: attention level out of range");
}

std::vector<double> time_embed(double t, int d) {
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("time_embed: d must be even and >= 2");
    constexpr double kScale = 100.0;
    std::vector<double> e(static_cast<std::size_t>(d));
    for (int i = 0; i < d / 2; ++i) {
        const double omega = std::pow(10000.0, 2.0 * i / d);
        const double a = kScale * t / omega;
        e[2 * i] = std::sin(a);
        e[2 * i + 1] = std::cos(a);
    }
    return e;
}

int ParamStore::add(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.w.assign(n, 0.0);
    p.g.assign(n, 0.0);
    items.push_back(std::move(p));
    return static_cast<int>(items.size()) - 1;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& p : items) n += p.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& p : items) std::fill(p.g.begin(), p.g.end(), 0.0);
}

void ParamStore::flatten_grads(std::vector<double>& out) const {
    out.resize(total_size());
    std::size_t k = 0;
    for (const auto& p : items)
        for (double g : p.g) out[k++] = g;
}

void ParamStore::flatten_weights(std::vector<double>& out) const {
    out.resize(total_size());
    std::size_t k = 0;
    for (const auto& p : items)
        for (double w : p.w) out[k++] = w;
}

void ParamStore::set_flat_weights(std::span<const double> w) {
    if (w.size() != total_size()) throw std::invalid_argument("set_flat_weights: size mismatch");
    std::size_t k = 0;
    for (auto& p : items)
        for (double& x : p.w) x = w[k++];
}

void ParamStore::apply_step(std::span<const double> direction, double scale) {
    if (direction.size() != total_size()) throw std::invalid_argument("apply_step: size mismatch");
    std::size_t k = 0;
    for (auto& p : items)
        for (double& x : p.w) x -= scale * direction[k++];
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : items)
        if (p.name == name) return &p;
    return nullptr;
}

// ---------------------------------------------------------------- Conv1d

Conv1d Conv1d::make(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
                    int& slot, Rng& rng, bool zero_init) {
    Conv1d c;
    c.cin = cin;
    c.cout = cout;
    c.k = k;
    c.stride = stride;
    c.w_id = ps.add(name + ".w", {cout, cin, k});
    c.b_id = ps.add(name + ".b", {cout});
    if (!zero_init) init_uniform(ps[c.w_id], rng, cin * k);
    c.x_slot = slot++;
    return c;
}

Mat Conv1d::forward(const ParamStore& ps, const Mat& x, Trace& tr) const {
    const int tin = x.cols;
    const int tout = (stride == 1) ? tin : tin / stride;
    const int pad = k / 2;
    tr.slot[x_slot] = x;
    const Param& W = ps[w_id];
    const Param& B = ps[b_id];
    Mat y(cout, tout);
    for (int o = 0; o < cout; ++o) {
        double* yr = y.row(o);
        const double bias = B.w[o];
        for (int i = 0; i < tout; ++i) yr[i] = bias;
        for (int c = 0; c < cin; ++c) {
            const double* xr = x.row(c);
            const double* wr = &W.w[(static_cast<std::size_t>(o) * cin + c) * k];
            for (int j = 0; j < k; ++j) {
                const double w = wr[j];
                if (w == 0.0) continue;
                // valid output range for input index i*stride + j - pad
                int lo = 0, hi = tout - 1;
                while (lo <= hi && lo * stride + j - pad < 0) ++lo;
                while (hi >= lo && hi * stride + j - pad >= tin) --hi;
                const double* xs = xr + (lo * stride + j - pad);
                for (int i = lo; i <= hi; ++i) yr[i] += w * xs[(i - lo) * stride];
            }
        }
    }
    return y;
}

Mat Conv1d::backward(ParamStore& ps, const Trace& tr, const Mat& dy) const {
    const Mat& x = tr.slot[x_slot];
    const int tin = x.cols;
    const int tout = dy.cols;
    const int pad = k / 2;
    Param& W = ps[w_id];
    Param& B = ps[b_id];
    Mat dx(cin, tin);
    for (int o = 0; o < cout; ++o) {
        const double* dyr = dy.row(o);
        double db = 0.0;
        for (int i = 0; i < tout; ++i) db += dyr[i];
        B.g[o] += db;
        for (int c = 0; c < cin; ++c) {
            const double* xr = x.row(c);
            double* dxr = dx.row(c);
            const std::size_t wbase = (static_cast<std::size_t>(o) * cin + c) * k;
            for (int j = 0; j < k; ++j) {
                const double w = W.w[wbase + j];
                double dw = 0.0;
                int lo = 0, hi = tout - 1;
                while (lo <= hi && lo * stride + j - pad < 0) ++lo;
                while (hi >= lo && hi * stride + j - pad >= tin) --hi;
                for (int i = lo; i <= hi; ++i) {
                    const int xi = i * stride + j - pad;
                    dw += dyr[i] * xr[xi];
                    dxr[xi] += w * dyr[i];
                }
                W.g[wbase + j] += dw;
            }
        }
    }
    return dx;
}

// ------------------------------------------------------- ConvTranspose1d

ConvTranspose1d ConvTranspose1d::make(ParamStore& ps, const std::string& name, int cin, int cout,
                                      int& slot, Rng& rng) {
    ConvTranspose1d c;
    c.cin = cin;
    c.cout = cout;
    c.w_id = ps.add(name + ".w", {cin, cout, c.k});
    c.b_id = ps.add(name + ".b", {cout});
    init_uniform(ps[c.w_id], rng, cin * c.k / c.stride);
    c.x_slot = slot++;
    return c;
}

Mat ConvTranspose1d::forward(const ParamStore& ps, const Mat& x, Trace& tr) const {
    const int tin = x.cols;
    const int tout = tin * stride;  // k=4, stride=2, pad=1
    const int pad = 1;
    tr.slot[x_slot] = x;
    const Param& W = ps[w_id];
    const Param& B = ps[b_id];
    Mat y(cout, tout);
    for (int o = 0; o < cout; ++o) {
        double* yr = y.row(o);
        for (int i = 0; i < tout; ++i) yr[i] = B.w[o];
    }
    for (int c = 0; c < cin; ++c) {
        const double* xr = x.row(c);
        for (int o = 0; o < cout; ++o) {
            double* yr = y.row(o);
            const double* wr = &W.w[(static_cast<std::size_t>(c) * cout + o) * k];
            for (int n = 0; n < tin; ++n) {
                const double xv = xr[n];
                const int base = n * stride - pad;
                for (int j = 0; j < k; ++j) {
                    const int i = base + j;
                    if (i >= 0 && i < tout) yr[i] += wr[j] * xv;
                }
            }
        }
    }
    return y;
}

Mat ConvTranspose1d::backward(ParamStore& ps, const Trace& tr, const Mat& dy) const {
    const Mat& x = tr.slot[x_slot];
    const int tin = x.cols;
    const int tout = dy.cols;
    const int pad = 1;
    Param& W = ps[w_id];
    Param& B = ps[b_id];
    Mat dx(cin, tin);
    for (int o = 0; o < cout; ++o) {
        const double* dyr = dy.row(o);
        double db = 0.0;
        for (int i = 0; i < tout; ++i) db += dyr[i];
        B.g[o] += db;
    }
    for (int c = 0; c < cin; ++c) {
        const double* xr = x.row(c);
        double* dxr = dx.row(c);
        for (int o = 0; o < cout; ++o) {
            const double* dyr = dy.row(o);
            const std::size_t wbase = (static_cast<std::size_t>(c) * cout + o) * k;
            for (int n = 0; n < tin; ++n) {
                const int base = n * stride - pad;
                double acc = 0.0;
                for (int j = 0; j < k; ++j) {
                    const int i = base + j;
                    if (i < 0 || i >= tout) continue;
                    acc += W.w[wbase + j] * dyr[i];
                    W.g[wbase + j] += xr[n] * dyr[i];
                }
                dxr[n] += acc;
            }
        }
    }
    return dx;
}

// -------------------------------------------------------------- GroupNorm

GroupNorm GroupNorm::make(ParamStore& ps, const std::string& name, int channels, int groups,
                          int& slot) {
    GroupNorm g;
    g.channels = channels;
    g.groups = groups;
    g.gamma_id = ps.add(name + ".gamma", {channels});
    g.beta_id = ps.add(name + ".beta", {channels});
    std::fill(ps[g.gamma_id].w.begin(), ps[g.gamma_id].w.end(), 1.0);
    g.xhat_slot = slot++;
    g.stats_slot = slot++;
    return g;
}

Mat GroupNorm::forward(const ParamStore& ps, const Mat& x, Trace& tr) const {
    const int t = x.cols;
    const int cg = channels / groups;
    Mat xhat(channels, t);
    Mat stats(1, groups);
    const Param& gamma = ps[gamma_id];
    const Param& beta = ps[beta_id];
    Mat y(channels, t);
    for (int g = 0; g < groups; ++g) {
        const int c0 = g * cg;
        double mean = 0.0;
        for (int c = c0; c < c0 + cg; ++c) {
            const double* xr = x.row(c);
            for (int i = 0; i < t; ++i) mean += xr[i];
        }
        const double m = static_cast<double>(cg) * t;
        mean /= m;
        double var = 0.0;
        for (int c = c0; c < c0 + cg; ++c) {
            const double* xr = x.row(c);
            for (int i = 0; i < t; ++i) {
                const double d = xr[i] - mean;
                var += d * d;
            }
        }
        var /= m;
        const double inv_std = 1.0 / std::sqrt(var + kNormEps);
        stats(0, g) = inv_std;
        for (int c = c0; c < c0 + cg; ++c) {
            const double* xr = x.row(c);
            double* hr = xhat.row(c);
            double* yr = y.row(c);
            for (int i = 0; i < t; ++i) {
                hr[i] = (xr[i] - mean) * inv_std;
                yr[i] = gamma.w[c] * hr[i] + beta.w[c];
            }
        }
    }
    tr.slot[xhat_slot] = std::move(xhat);
    tr.slot[stats_slot] = std::move(stats);
    return y;
}

Mat GroupNorm::backward(ParamStore& ps, const Trace& tr, const Mat& dy) const {
    const Mat& xhat = tr.slot[xhat_slot];
    const Mat& stats = tr.slot[stats_slot];
    const int t = dy.cols;
    const int cg = channels / groups;
    Param& gamma = ps[gamma_id];
    Param& beta = ps[beta_id];
    Mat dx(channels, t);
    for (int g = 0; g < groups; ++g) {
        const int c0 = g * cg;
        const double m = static_cast<double>(cg) * t;
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int c = c0; c < c0 + cg; ++c) {
            const double* dyr = dy.row(c);
            const double* hr = xhat.row(c);
            double dgam = 0.0, dbet = 0.0;
            for (int i = 0; i < t; ++i) {
                const double dxh = dyr[i] * gamma.w[c];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * hr[i];
                dgam += dyr[i] * hr[i];
                dbet += dyr[i];
            }
            gamma.g[c] += dgam;
            beta.g[c] += dbet;
        }
        const double mean_dxh = sum_dxh / m;
        const double mean_dxh_xh = sum_dxh_xh / m;
        const double inv_std = stats(0, g);
        for (int c = c0; c < c0 + cg; ++c) {
            const double* dyr = dy.row(c);
            const double* hr = xhat.row(c);
            double* dxr = dx.row(c);
            for (int i = 0; i < t; ++i) {
                const double dxh = dyr[i] * gamma.w[c];
                dxr[i] = inv_std * (dxh - mean_dxh - hr[i] * mean_dxh_xh);
            }
        }
    }
    return dx;
}

// -------------------------------------------------------------- LayerNorm

LayerNorm LayerNorm::make(ParamStore& ps, const std::string& name, int channels, int& slot) {
    LayerNorm ln;
    ln.channels = channels;
    ln.gamma_id = ps.add(name + ".gamma", {channels});
    ln.beta_id = ps.add(name + ".beta", {channels});
    std::fill(ps[ln.gamma_id].w.begin(), ps[ln.gamma_id].w.end(), 1.0);
    ln.xhat_slot = slot++;
    ln.stats_slot = slot++;
    return ln;
}

Mat LayerNorm::forward(const ParamStore& ps, const Mat& x, Trace& tr) const {
    const int t = x.cols;
    Mat xhat(channels, t);
    Mat stats(1, t);
    const Param& gamma = ps[gamma_id];
    const Param& beta = ps[beta_id];
    Mat y(channels, t);
    for (int i = 0; i < t; ++i) {
        double mean = 0.0;
        for (int c = 0; c < channels; ++c) mean += x(c, i);
        mean /= channels;
        double var = 0.0;
        for (int c = 0; c < channels; ++c) {
            const double d = x(c, i) - mean;
            var += d * d;
        }
        var /= channels;
        const double inv_std = 1.0 / std::sqrt(var + kNormEps);
        stats(0, i) = inv_std;
        for (int c = 0; c < channels; ++c) {
            xhat(c, i) = (x(c, i) - mean) * inv_std;
            y(c, i) = gamma.w[c] * xhat(c, i) + beta.w[c];
        }
    }
    tr.slot[xhat_slot] = std::move(xhat);
    tr.slot[stats_slot] = std::move(stats);
    return y;
}

Mat LayerNorm::backward(ParamStore& ps, const Trace& tr, const Mat& dy) const {
    const Mat& xhat = tr.slot[xhat_slot];
    const Mat& stats = tr.slot[stats_slot];
    const int t = dy.cols;
    Param& gamma = ps[gamma_id];
    Param& beta = ps[beta_id];
    Mat dx(channels, t);
    for (int i = 0; i < t; ++i) {
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int c = 0; c < channels; ++c) {
            const double dxh = dy(c, i) * gamma.w[c];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xhat(c, i);
            gamma.g[c] += dy(c, i) * xhat(c, i);
            beta.g[c] += dy(c, i);
        }
        const double mean_dxh = sum_dxh / channels;
        const double mean_dxh_xh = sum_dxh_xh / channels;
        const double inv_std = stats(0, i);
        for (int c = 0; c < channels; ++c) {
            const double dxh = dy(c, i) * gamma.w[c];
            dx(c, i) = inv_std * (dxh - mean_dxh - xhat(c, i) * mean_dxh_xh);
        }
    }
    return dx;
}

// ------------------------------------------------------------------ SiLU

SiLU SiLU::make(int& slot) {
    SiLU s;
    s.x_slot = slot++;
    return s;
}

Mat SiLU::forward(const Mat& x, Trace& tr) const {
    tr.slot[x_slot] = x;
    Mat y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] * sigmoid(x.v[i]);
    return y;
}

Mat SiLU::backward(const Trace& tr, const Mat& dy) const {
    const Mat& x = tr.slot[x_slot];
    Mat dx(dy.rows, dy.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = sigmoid(x.v[i]);
        dx.v[i] = dy.v[i] * s * (1.0 + x.v[i] * (1.0 - s));
    }
    return dx;
}

// --------------------------------------------------------- ResidualBlock

ResidualBlock ResidualBlock::make(ParamStore& ps, const std::string& name, int cin, int cout,
                                  int groups, int t_dim, int& slot, Rng& rng) {
    ResidualBlock rb;
    rb.cout = cout;
    rb.t_dim = t_dim;
    rb.conv_res = Conv1d::make(ps, name + ".conv_res", cin, cout, 3, 1, slot, rng);
    rb.gn1 = GroupNorm::make(ps, name + ".gn1", cout, groups, slot);
    rb.act1 = SiLU::make(slot);
    rb.conv_mid = Conv1d::make(ps, name + ".conv_mid", cout, cout, 3, 1, slot, rng);
    rb.tproj_w = ps.add(name + ".tproj.w", {cout, t_dim});
    rb.tproj_b = ps.add(name + ".tproj.b", {cout});
    init_uniform(ps[rb.tproj_w], rng, t_dim);
    rb.gn2 = GroupNorm::make(ps, name + ".gn2", cout, groups, slot);
    rb.act2 = SiLU::make(slot);
    rb.conv_mod = Conv1d::make(ps, name + ".conv_mod", cout, cout, 3, 1, slot, rng, true);
    rb.mid_slot = slot++;
    return rb;
}

Mat ResidualBlock::forward(const ParamStore& ps, const Mat& x, Trace& tr) const {
    Mat h_res = conv_res.forward(ps, x, tr);
    Mat a = gn1.forward(ps, h_res, tr);
    Mat b = act1.forward(a, tr);
    Mat h_mid = conv_mid.forward(ps, b, tr);

    const Param& tw = ps[tproj_w];
    const Param& tb = ps[tproj_b];
    Mat m = h_mid;
    for (int c = 0; c < cout; ++c) {
        double bias = tb.w[c];
        const double* wr = &tw.w[static_cast<std::size_t>(c) * t_dim];
        for (int j = 0; j < t_dim; ++j) bias += wr[j] * tr.t_emb[j];
        double* mr = m.row(c);
        for (int i = 0; i < m.cols; ++i) mr[i] += bias;
    }
    tr.slot[mid_slot] = m;

    Mat c2 = gn2.forward(ps, m, tr);
    Mat d = act2.forward(c2, tr);
    Mat h_mod = conv_mod.forward(ps, d, tr);

    Mat out = h_res;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += h_mod.v[i];
    return out;
}

Mat ResidualBlock::backward(ParamStore& ps, const Trace& tr, const Mat& dy) const {
    Mat dd = conv_mod.backward(ps, tr, dy);
    Mat dc2 = act2.backward(tr, dd);
    Mat dm = gn2.backward(ps, tr, dc2);

    Param& tw = ps[tproj_w];
    Param& tb = ps[tproj_b];
    for (int c = 0; c < cout; ++c) {
        const double* dmr = dm.row(c);
        double dbias = 0.0;
        for (int i = 0; i < dm.cols; ++i) dbias += dmr[i];
        tb.g[c] += dbias;
        double* gw = &tw.g[static_cast<std::size_t>(c) * t_dim];
        for (int j = 0; j < t_dim; ++j) gw[j] += dbias * tr.t_emb[j];
    }

    Mat db = conv_mid.backward(ps, tr, dm);
    Mat da = act1.backward(tr, db);
    Mat dh_res = gn1.backward(ps, tr, da);
    for (std::size_t i = 0; i < dh_res.size(); ++i) dh_res.v[i] += dy.v[i];
    return conv_res.backward(ps, tr, dh_res);
}

// --------------------------------------------------- CrossAttentionBlock

CrossAttentionBlock CrossAttentionBlock::make(ParamStore& ps, const std::string& name,
                                              int channels, int d_llm, int d_k, int& slot,
                                              Rng& rng) {
    CrossAttentionBlock ab;
    ab.channels = channels;
    ab.d_llm = d_llm;
    ab.d_k = d_k;
    ab.ffn_hidden = 2 * channels;
    ab.ln1 = LayerNorm::make(ps, name + ".ln1", channels, slot);
    ab.wq_id = ps.add(name + ".wq", {channels, d_k});
    ab.wk_id = ps.add(name + ".wk", {d_llm, d_k});
    ab.wv_id = ps.add(name + ".wv", {d_llm, d_k});
    ab.wo_id = ps.add(name + ".wo", {d_k, channels});  // zero-init: starts as identity
    init_uniform(ps[ab.wq_id], rng, channels);
    init_uniform(ps[ab.wk_id], rng, d_llm);
    init_uniform(ps[ab.wv_id], rng, d_llm);
    ab.ln2 = LayerNorm::make(ps, name + ".ln2", channels, slot);
    ab.ffn_w1 = ps.add(name + ".ffn.w1", {ab.ffn_hidden, channels});
    ab.ffn_b1 = ps.add(name + ".ffn.b1", {ab.ffn_hidden});
    ab.ffn_w2 = ps.add(name + ".ffn.w2", {channels, ab.ffn_hidden});
    ab.ffn_b2 = ps.add(name + ".ffn.b2", {channels});
    init_uniform(ps[ab.ffn_w1], rng, channels);
    init_uniform(ps[ab.ffn_w2], rng, ab.ffn_hidden);
    ab.x_slot = slot++;
    ab.e_slot = slot++;
    ab.mask_slot = slot++;
    ab.q_slot = slot++;
    ab.k_slot = slot++;
    ab.v_slot = slot++;
    ab.a_slot = slot++;
    ab.o_slot = slot++;
    ab.attout_slot = slot++;
    ab.ffn_u_slot = slot++;
    ab.ffn_s_slot = slot++;
    return ab;
}

Mat CrossAttentionBlock::forward(const ParamStore& ps, const Mat& h, const Mat& etxt,
                                 std::span<const std::uint8_t> mask, Trace& tr) const {
    const int t = h.cols;
    const int m = etxt.rows;
    if (etxt.cols != d_llm)
        throw std::invalid_argument("cross_attention: embedding width mismatch");
    if (!mask.empty() && static_cast<int>(mask.size()) < m)
        throw std::invalid_argument("cross_attention: mask shorter than token rows");

    Mat x = ln1.forward(ps, h, tr);
    tr.slot[x_slot] = x;
    tr.slot[e_slot] = etxt;
    Mat mask_row(1, m);
    bool any_active = false;
    for (int r = 0; r < m; ++r) {
        const bool on = mask.empty() || mask[static_cast<std::size_t>(r)] != 0;
        mask_row(0, r) = on ? 1.0 : 0.0;
        any_active = any_active || on;
    }
    if (!any_active) throw std::invalid_argument("cross_attention: all text tokens masked");
    tr.slot[mask_slot] = mask_row;

    const Param& wq = ps[wq_id];
    const Param& wk = ps[wk_id];
    const Param& wv = ps[wv_id];
    const Param& wo = ps[wo_id];

    Mat q(t, d_k);
    for (int i = 0; i < t; ++i)
        for (int kk = 0; kk < d_k; ++kk) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) acc += x(c, i) * wq.w[static_cast<std::size_t>(c) * d_k + kk];
            q(i, kk) = acc;
        }
    Mat kmat(m, d_k), vmat(m, d_k);
    for (int r = 0; r < m; ++r)
        for (int kk = 0; kk < d_k; ++kk) {
            double ak = 0.0, av = 0.0;
            for (int d = 0; d < d_llm; ++d) {
                const double e = etxt(r, d);
                ak += e * wk.w[static_cast<std::size_t>(d) * d_k + kk];
                av += e * wv.w[static_cast<std::size_t>(d) * d_k + kk];
            }
            kmat(r, kk) = ak;
            vmat(r, kk) = av;
        }

    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    Mat a(t, m);
    for (int i = 0; i < t; ++i) {
        double mx = -1e300;
        for (int r = 0; r < m; ++r) {
            if (mask_row(0, r) == 0.0) continue;
            double s = 0.0;
            for (int kk = 0; kk < d_k; ++kk) s += q(i, kk) * kmat(r, kk);
            s *= scale;
            a(i, r) = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int r = 0; r < m; ++r) {
            if (mask_row(0, r) == 0.0) {
                a(i, r) = 0.0;
                continue;
            }
            a(i, r) = std::exp(a(i, r) - mx);
            z += a(i, r);
        }
        for (int r = 0; r < m; ++r) a(i, r) /= z;
    }

    Mat o(t, d_k);
    for (int i = 0; i < t; ++i)
        for (int kk = 0; kk < d_k; ++kk) {
            double acc = 0.0;
            for (int r = 0; r < m; ++r) acc += a(i, r) * vmat(r, kk);
            o(i, kk) = acc;
        }

    Mat y(channels, t);  // attention output projected back + residual
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < t; ++i) {
            double acc = 0.0;
            for (int kk = 0; kk < d_k; ++kk) acc += o(i, kk) * wo.w[static_cast<std::size_t>(kk) * channels + c];
            y(c, i) = acc + h(c, i);
        }

    tr.slot[q_slot] = std::move(q);
    tr.slot[k_slot] = std::move(kmat);
    tr.slot[v_slot] = std::move(vmat);
    tr.slot[a_slot] = a;
    tr.slot[o_slot] = std::move(o);
    tr.slot[attout_slot] = y;

    Mat z = ln2.forward(ps, y, tr);
    const Param& w1 = ps[ffn_w1];
    const Param& b1 = ps[ffn_b1];
    const Param& w2 = ps[ffn_w2];
    const Param& b2 = ps[ffn_b2];
    Mat u(ffn_hidden, t);
    for (int hh = 0; hh < ffn_hidden; ++hh)
        for (int i = 0; i < t; ++i) {
            double acc = b1.w[hh];
            for (int c = 0; c < channels; ++c) acc += w1.w[static_cast<std::size_t>(hh) * channels + c] * z(c, i);
            u(hh, i) = acc;
        }
    Mat s(ffn_hidden, t);
    for (std::size_t i = 0; i < u.size(); ++i) s.v[i] = u.v[i] * sigmoid(u.v[i]);
    Mat out(channels, t);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < t; ++i) {
            double acc = b2.w[c];
            for (int hh = 0; hh < ffn_hidden; ++hh) acc += w2.w[static_cast<std::size_t>(c) * ffn_hidden + hh] * s(hh, i);
            out(c, i) = acc + y(c, i);
        }
    tr.slot[ffn_u_slot] = std::move(u);
    tr.slot[ffn_s_slot] = std::move(s);
    return out;
}

Mat CrossAttentionBlock::attention_weights(const Trace& tr) const { return tr.slot[a_slot]; }

Mat CrossAttentionBlock::backward(ParamStore& ps, const Trace& tr, const Mat& dy) const {
    const Mat& x = tr.slot[x_slot];
    const Mat& etxt = tr.slot[e_slot];
    const Mat& q = tr.slot[q_slot];
    const Mat& kmat = tr.slot[k_slot];
    const Mat& vmat = tr.slot[v_slot];
    const Mat& a = tr.slot[a_slot];
    const Mat& o = tr.slot[o_slot];
    const Mat& u = tr.slot[ffn_u_slot];
    const Mat& s = tr.slot[ffn_s_slot];
    const int t = dy.cols;
    const int m = etxt.rows;

    // z = ln2 output, rebuilt from the stashed normalized values
    const Mat& zhat = tr.slot[ln2.xhat_slot];
    const Param& g2 = ps[ln2.gamma_id];
    const Param& be2 = ps[ln2.beta_id];
    Mat z(channels, t);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < t; ++i) z(c, i) = g2.w[c] * zhat(c, i) + be2.w[c];

    Param& w1 = ps[ffn_w1];
    Param& b1 = ps[ffn_b1];
    Param& w2 = ps[ffn_w2];
    Param& b2 = ps[ffn_b2];

    // FFN backward: out = w2*silu(w1*z+b1)+b2 + y
    Mat ds(ffn_hidden, t);
    for (int c = 0; c < channels; ++c) {
        const double* dyr = dy.row(c);
        double db = 0.0;
        for (int i = 0; i < t; ++i) db += dyr[i];
        b2.g[c] += db;
        for (int hh = 0; hh < ffn_hidden; ++hh) {
            const double w = w2.w[static_cast<std::size_t>(c) * ffn_hidden + hh];
            double dw = 0.0;
            const double* sr = s.row(hh);
            double* dsr = ds.row(hh);
            for (int i = 0; i < t; ++i) {
                dw += dyr[i] * sr[i];
                dsr[i] += w * dyr[i];
            }
            w2.g[static_cast<std::size_t>(c) * ffn_hidden + hh] += dw;
        }
    }
    Mat du(ffn_hidden, t);
    for (std::size_t i = 0; i < du.size(); ++i) {
        const double sg = sigmoid(u.v[i]);
        du.v[i] = ds.v[i] * sg * (1.0 + u.v[i] * (1.0 - sg));
    }
    Mat dz(channels, t);
    for (int hh = 0; hh < ffn_hidden; ++hh) {
        const double* dur = du.row(hh);
        double db = 0.0;
        for (int i = 0; i < t; ++i) db += dur[i];
        b1.g[hh] += db;
        for (int c = 0; c < channels; ++c) {
            const double w = w1.w[static_cast<std::size_t>(hh) * channels + c];
            double dw = 0.0;
            const double* zr = z.row(c);
            double* dzr = dz.row(c);
            for (int i = 0; i < t; ++i) {
                dw += dur[i] * zr[i];
                dzr[i] += w * dur[i];
            }
            w1.g[static_cast<std::size_t>(hh) * channels + c] += dw;
        }
    }

    Mat dyy = ln2.backward(ps, tr, dz);
    for (std::size_t i = 0; i < dyy.size(); ++i) dyy.v[i] += dy.v[i];  // y residual

    // projection backward: y_att(c,i) = sum_kk o(i,kk) wo(kk,c)
    Param& wq = ps[wq_id];
    Param& wk = ps[wk_id];
    Param& wv = ps[wv_id];
    Param& wo = ps[wo_id];
    Mat do_(t, d_k);
    for (int kk = 0; kk < d_k; ++kk)
        for (int c = 0; c < channels; ++c) {
            const double w = wo.w[static_cast<std::size_t>(kk) * channels + c];
            double dw = 0.0;
            for (int i = 0; i < t; ++i) {
                dw += o(i, kk) * dyy(c, i);
                do_(i, kk) += w * dyy(c, i);
            }
            wo.g[static_cast<std::size_t>(kk) * channels + c] += dw;
        }

    Mat da(t, m), dv(m, d_k);
    for (int i = 0; i < t; ++i)
        for (int r = 0; r < m; ++r) {
            double acc = 0.0;
            for (int kk = 0; kk < d_k; ++kk) acc += do_(i, kk) * vmat(r, kk);
            da(i, r) = acc;
        }
    for (int r = 0; r < m; ++r)
        for (int kk = 0; kk < d_k; ++kk) {
            double acc = 0.0;
            for (int i = 0; i < t; ++i) acc += a(i, r) * do_(i, kk);
            dv(r, kk) = acc;
        }

    // softmax rows
    Mat dscore(t, m);
    for (int i = 0; i < t; ++i) {
        double dot = 0.0;
        for (int r = 0; r < m; ++r) dot += a(i, r) * da(i, r);
        for (int r = 0; r < m; ++r) dscore(i, r) = a(i, r) * (da(i, r) - dot);
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    Mat dq(t, d_k), dk(m, d_k);
    for (int i = 0; i < t; ++i)
        for (int kk = 0; kk < d_k; ++kk) {
            double acc = 0.0;
            for (int r = 0; r < m; ++r) acc += dscore(i, r) * kmat(r, kk);
            dq(i, kk) = acc * scale;
        }
    for (int r = 0; r < m; ++r)
        for (int kk = 0; kk < d_k; ++kk) {
            double acc = 0.0;
            for (int i = 0; i < t; ++i) acc += dscore(i, r) * q(i, kk);
            dk(r, kk) = acc * scale;
        }

    Mat dx(channels, t);
    for (int c = 0; c < channels; ++c)
        for (int kk = 0; kk < d_k; ++kk) {
            const double w = wq.w[static_cast<std::size_t>(c) * d_k + kk];
            double dw = 0.0;
            for (int i = 0; i < t; ++i) {
                dw += x(c, i) * dq(i, kk);
                dx(c, i) += w * dq(i, kk);
            }
            wq.g[static_cast<std::size_t>(c) * d_k + kk] += dw;
        }
    for (int d = 0; d < d_llm; ++d)
        for (int kk = 0; kk < d_k; ++kk) {
            double dwk = 0.0, dwv = 0.0;
            for (int r = 0; r < m; ++r) {
                dwk += etxt(r, d) * dk(r, kk);
                dwv += etxt(r, d) * dv(r, kk);
            }
            wk.g[static_cast<std::size_t>(d) * d_k + kk] += dwk;
            wv.g[static_cast<std::size_t>(d) * d_k + kk] += dwv;
        }

    Mat dh = ln1.backward(ps, tr, dx);
    for (std::size_t i = 0; i < dh.size(); ++i) dh.v[i] += dyy.v[i];  // h residual
    return dh;
}

// ------------------------------------------------------------ VelocityNet

VelocityNet VelocityNet::build(const NetConfig& cfg, std::uint64_t init_seed) {
    cfg.validate();
    VelocityNet net;
    net.cfg = cfg;
    Rng rng(init_seed);
    int slot = 0;
    const int lv = cfg.levels();
    const int td = cfg.time_dim();

    net.in_conv = Conv1d::make(net.params, "in_conv", 1, cfg.channels(0), 3, 1, slot, rng);
    for (int l = 0; l + 1 < lv; ++l) {
        net.enc.push_back(ResidualBlock::make(net.params, "enc" + std::to_string(l),
                                              cfg.channels(l), cfg.channels(l), cfg.groups, td,
                                              slot, rng));
        net.down.push_back(Conv1d::make(net.params, "down" + std::to_string(l), cfg.channels(l),
                                        cfg.channels(l + 1), 3, 2, slot, rng));
    }
    const int cb = cfg.channels(lv - 1);
    net.mid1 = ResidualBlock::make(net.params, "mid1", cb, cb, cfg.groups, td, slot, rng);
    if (cfg.attention_levels.count(lv - 1))
        net.mid_attn = CrossAttentionBlock::make(net.params, "mid_attn", cb, cfg.d_llm, cfg.d_k,
                                                 slot, rng);
    net.mid2 = ResidualBlock::make(net.params, "mid2", cb, cb, cfg.groups, td, slot, rng);

    net.up.resize(static_cast<std::size_t>(lv - 1));
    net.dec.resize(static_cast<std::size_t>(lv - 1));
    net.dec_attn.resize(static_cast<std::size_t>(lv - 1));
    for (int l = lv - 2; l >= 0; --l) {
        net.up[l] = ConvTranspose1d::make(net.params, "up" + std::to_string(l),
                                          cfg.channels(l + 1), cfg.channels(l), slot, rng);
        net.dec[l] = ResidualBlock::make(net.params, "dec" + std::to_string(l),
                                         2 * cfg.channels(l), cfg.channels(l), cfg.groups, td,
                                         slot, rng);
        if (cfg.attention_levels.count(l))
            net.dec_attn[l] = CrossAttentionBlock::make(net.params, "dec_attn" + std::to_string(l),
                                                        cfg.channels(l), cfg.d_llm, cfg.d_k, slot,
                                                        rng);
    }
    net.out_conv = Conv1d::make(net.params, "out_conv", cfg.channels(0), 1, 3, 1, slot, rng);
    net.n_slots = slot;
    return net;
}

Trace VelocityNet::make_trace() const {
    Trace tr;
    tr.slot.resize(static_cast<std::size_t>(n_slots));
    return tr;
}

std::vector<double> VelocityNet::forward(std::span<const double> x, double t, const Mat& etxt,
                                         std::span<const std::uint8_t> mask, Trace& tr) const {
    if (static_cast<int>(x.size()) != cfg.length)
        throw std::invalid_argument("forward: input length mismatch");
    tr.t_emb = time_embed(t, cfg.time_dim());

    Mat h(1, cfg.length);
    std::copy(x.begin(), x.end(), h.v.begin());
    h = in_conv.forward(params, h, tr);

    const int lv = cfg.levels();
    std::vector<Mat> skips;
    for (int l = 0; l + 1 < lv; ++l) {
        h = enc[l].forward(params, h, tr);
        skips.push_back(h);
        h = down[l].forward(params, h, tr);
    }

    h = mid1.forward(params, h, tr);
    if (mid_attn) h = mid_attn->forward(params, h, etxt, mask, tr);
    h = mid2.forward(params, h, tr);

    for (int l = lv - 2; l >= 0; --l) {
        h = up[l].forward(params, h, tr);
        h = concat_channels(h, skips[l]);
        h = dec[l].forward(params, h, tr);
        if (dec_attn[l]) h = dec_attn[l]->forward(params, h, etxt, mask, tr);
    }

    h = out_conv.forward(params, h, tr);
    return h.v;
}

void VelocityNet::backward(const Trace& tr, std::span<const double> dv) {
    Mat dh(1, cfg.length);
    std::copy(dv.begin(), dv.end(), dh.v.begin());
    dh = out_conv.backward(params, tr, dh);

    const int lv = cfg.levels();
    std::vector<Mat> dskip(static_cast<std::size_t>(lv - 1));
    for (int l = 0; l + 1 < lv; ++l) {
        if (dec_attn[l]) dh = dec_attn[l]->backward(params, tr, dh);
        dh = dec[l].backward(params, tr, dh);
        const int c = cfg.channels(l);
        Mat dup(c, dh.cols);
        Mat dsk(c, dh.cols);
        std::copy(dh.v.begin(), dh.v.begin() + dup.size(), dup.v.begin());
        std::copy(dh.v.begin() + dup.size(), dh.v.end(), dsk.v.begin());
        dskip[l] = std::move(dsk);
        dh = up[l].backward(params, tr, dup);
    }

    dh = mid2.backward(params, tr, dh);
    if (mid_attn) dh = mid_attn->backward(params, tr, dh);
    dh = mid1.backward(params, tr, dh);

    for (int l = lv - 2; l >= 0; --l) {
        dh = down[l].backward(params, tr, dh);
        for (std::size_t i = 0; i < dh.size(); ++i) dh.v[i] += dskip[l].v[i];
        dh = enc[l].backward(params, tr, dh);
    }
    in_conv.backward(params, tr, dh);
}

}  // namespace flowgen
