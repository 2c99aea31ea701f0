// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flowgen/mat.hpp"
#include "flowgen/rng.hpp"

namespace flowgen {

// Hyperparameters of the velocity estimator. Channel count at resolution
// level l is base_channels * channel_multipliers[l]; level 0 is the full
// sequence, each further level halves the length.
struct NetConfig {
    int length = 64;
    int base_channels = 16;
    std::vector<int> channel_multipliers = {1, 2, 4, 8};
    int groups = 8;
    int d_llm = 64;
    int d_k = 32;
    // Resolution levels with cross-modal attention. levels()-1 addresses the
    // bottleneck; smaller indices address decoder stages.
    std::set<int> attention_levels = {1, 2, 3};

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int channels(int level) const { return base_channels * channel_multipliers[level]; }
    int time_dim() const { return 4 * base_channels; }

    // Throws std::invalid_argument when the downsampling stack cannot divide
    // the sequence exactly or the group count does not divide the channels.
    void validate() const;

    bool operator==(const NetConfig&) const = default;
};

// Sinusoidal timestep features: interleaved [sin(s*t/w_i), cos(s*t/w_i)]
// pairs with w_i = 10000^(2i/d) and scale s = 100.
std::vector<double> time_embed(double t, int d);

struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> w;
    std::vector<double> g;

    std::size_t size() const { return w.size(); }
};

struct ParamStore {
    std::vector<Param> items;

    int add(std::string name, std::vector<int> shape);
    Param& operator[](int i) { return items[static_cast<std::size_t>(i)]; }
    const Param& operator[](int i) const { return items[static_cast<std::size_t>(i)]; }

    std::size_t total_size() const;
    void zero_grads();
    void flatten_grads(std::vector<double>& out) const;
    void flatten_weights(std::vector<double>& out) const;
    void set_flat_weights(std::span<const double> w);
    // Applies a flattened step: w -= scale * direction.
    void apply_step(std::span<const double> direction, double scale);
    Param* find(const std::string& name);
};

// Per-call activation stash. Forward fills it, backward reads it; a trace
// is owned by one forward/backward pair, so concurrent evaluations with
// separate traces never share mutable state.
struct Trace {
    std::vector<Mat> slot;
    std::vector<double> t_emb;
};

struct Conv1d {
    int w_id = -1, b_id = -1;
    int cin = 0, cout = 0, k = 3, stride = 1;
    int x_slot = -1;

    static Conv1d make(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                       int stride, int& slot, Rng& rng, bool zero_init = false);
    Mat forward(const ParamStore& ps, const Mat& x, Trace& tr) const;
    Mat backward(ParamStore& ps, const Trace& tr, const Mat& dy) const;
};

struct ConvTranspose1d {
    int w_id = -1, b_id = -1;
    int cin = 0, cout = 0, k = 4, stride = 2;
    int x_slot = -1;

    static ConvTranspose1d make(ParamStore& ps, const std::string& name, int cin, int cout,
                                int& slot, Rng& rng);
    Mat forward(const ParamStore& ps, const Mat& x, Trace& tr) const;
    Mat backward(ParamStore& ps, const Trace& tr, const Mat& dy) const;
};

struct GroupNorm {
    int gamma_id = -1, beta_id = -1;
    int channels = 0, groups = 1;
    int xhat_slot = -1, stats_slot = -1;

    static GroupNorm make(ParamStore& ps, const std::string& name, int channels, int groups,
                          int& slot);
    Mat forward(const ParamStore& ps, const Mat& x, Trace& tr) const;
    Mat backward(ParamStore& ps, const Trace& tr, const Mat& dy) const;
};

// Normalizes the channel axis independently at every position.
struct LayerNorm {
    int gamma_id = -1, beta_id = -1;
    int channels = 0;
    int xhat_slot = -1, stats_slot = -1;

    static LayerNorm make(ParamStore& ps, const std::string& name, int channels, int& slot);
    Mat forward(const ParamStore& ps, const Mat& x, Trace& tr) const;
    Mat backward(ParamStore& ps, const Trace& tr, const Mat& dy) const;
};

struct SiLU {
    int x_slot = -1;

    static SiLU make(int& slot);
    Mat forward(const Mat& x, Trace& tr) const;
    Mat backward(const Trace& tr, const Mat& dy) const;
};

// Timestep-aware residual unit:
//   h_res = conv(x)
//   h_mid = conv(silu(gnorm(h_res)))
//   h_mod = conv(silu(gnorm(h_mid + proj(t_emb))))   (final conv zero-init)
//   out   = h_res + h_mod
struct ResidualBlock {
    Conv1d conv_res, conv_mid, conv_mod;
    GroupNorm gn1, gn2;
    SiLU act1, act2;
    int tproj_w = -1, tproj_b = -1;
    int t_dim = 0, cout = 0;
    int mid_slot = -1;  // h_mid + t_bias, input of gn2

    static ResidualBlock make(ParamStore& ps, const std::string& name, int cin, int cout,
                              int groups, int t_dim, int& slot, Rng& rng);
    Mat forward(const ParamStore& ps, const Mat& x, Trace& tr) const;
    Mat backward(ParamStore& ps, const Trace& tr, const Mat& dy) const;
};

// Pre-norm cross attention over text tokens followed by a residual FFN.
// Temporal positions query; text rows provide keys and values. Rows whose
// mask entry is 0 are excluded from the softmax.
struct CrossAttentionBlock {
    LayerNorm ln1, ln2;
    int wq_id = -1, wk_id = -1, wv_id = -1, wo_id = -1;
    int ffn_w1 = -1, ffn_b1 = -1, ffn_w2 = -1, ffn_b2 = -1;
    int channels = 0, d_llm = 0, d_k = 0, ffn_hidden = 0;
    int x_slot = -1, e_slot = -1, mask_slot = -1;
    int q_slot = -1, k_slot = -1, v_slot = -1, a_slot = -1, o_slot = -1;
    int attout_slot = -1, ffn_u_slot = -1, ffn_s_slot = -1;

    static CrossAttentionBlock make(ParamStore& ps, const std::string& name, int channels,
                                    int d_llm, int d_k, int& slot, Rng& rng);
    Mat forward(const ParamStore& ps, const Mat& h, const Mat& etxt,
                std::span<const std::uint8_t> mask, Trace& tr) const;
    // Exposes the softmax rows for tests; recomputed from the trace.
    Mat attention_weights(const Trace& tr) const;
    Mat backward(ParamStore& ps, const Trace& tr, const Mat& dy) const;
};

// U-Net velocity estimator: strided-conv encoder, attention-equipped
// bottleneck, transposed-conv decoder with skip concatenation, terminal
// projection back to one channel.
struct VelocityNet {
    NetConfig cfg;
    ParamStore params;
    int n_slots = 0;

    Conv1d in_conv, out_conv;
    std::vector<ResidualBlock> enc;
    std::vector<Conv1d> down;
    ResidualBlock mid1, mid2;
    std::optional<CrossAttentionBlock> mid_attn;
    std::vector<ConvTranspose1d> up;                       // indexed by target level
    std::vector<ResidualBlock> dec;                        // indexed by target level
    std::vector<std::optional<CrossAttentionBlock>> dec_attn;

    static VelocityNet build(const NetConfig& cfg, std::uint64_t init_seed);

    std::size_t parameter_count() const { return params.total_size(); }
    Trace make_trace() const;

    // Predicted velocity at state x, flow time t, conditioned on the text
    // rows of etxt (mask empty = all rows active). Pure given parameters.
    std::vector<double> forward(std::span<const double> x, double t, const Mat& etxt,
                                std::span<const std::uint8_t> mask, Trace& tr) const;

    // Accumulates parameter gradients for the cotangent dv of the output.
    // May be called repeatedly on one trace.
    void backward(const Trace& tr, std::span<const double> dv);
};

}  // namespace flowgen
