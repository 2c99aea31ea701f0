// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowgen/flow.hpp"
#include "flowgen/net.hpp"
#include "flowgen/rng.hpp"

using namespace flowgen;

namespace {

NetConfig small_cfg() {
    NetConfig cfg;
    cfg.length = 32;
    cfg.base_channels = 8;
    cfg.channel_multipliers = {1, 2, 4};
    cfg.groups = 4;
    cfg.d_llm = 16;
    cfg.d_k = 8;
    cfg.attention_levels = {2, 1};
    return cfg;
}

Mat random_mat(Rng& rng, int r, int c) {
    Mat m(r, c);
    for (auto& v : m.v) v = rng.normal();
    return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
    return mx;
}

}  // namespace

TEST_CASE("time embedding values") {
    const auto e0 = time_embed(0.0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(e0[static_cast<std::size_t>(2 * i)] == 0.0);
        CHECK(e0[static_cast<std::size_t>(2 * i + 1)] == 1.0);
    }
    const auto e = time_embed(0.01, 2);  // omega_0 = 1, argument = 1
    CHECK(e[0] == doctest::Approx(0.84147).epsilon(1e-5));
    CHECK(e[1] == doctest::Approx(0.54030).epsilon(1e-5));
    const auto e1 = time_embed(1.0, 2);
    CHECK(e1[0] == doctest::Approx(std::sin(100.0)));
    CHECK(e1[1] == doctest::Approx(std::cos(100.0)));
    CHECK_THROWS_AS(time_embed(0.5, 3), std::invalid_argument);
    CHECK_THROWS_AS(time_embed(0.5, 0), std::invalid_argument);
}

TEST_CASE("config validation") {
    NetConfig cfg = small_cfg();
    cfg.length = 31;  // not divisible by 4
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_cfg();
    cfg.base_channels = 10;  // not divisible by groups=4
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_cfg();
    cfg.attention_levels = {5};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(VelocityNet::build(cfg, 0), std::invalid_argument);
}

TEST_CASE("parameter count is a pure function of the config") {
    VelocityNet a = VelocityNet::build(small_cfg(), 1);
    VelocityNet b = VelocityNet::build(small_cfg(), 999);
    CHECK(a.parameter_count() == b.parameter_count());
    REQUIRE(a.params.items.size() == b.params.items.size());
    for (std::size_t i = 0; i < a.params.items.size(); ++i) {
        CHECK(a.params.items[i].name == b.params.items[i].name);
        CHECK(a.params.items[i].shape == b.params.items[i].shape);
    }
}

TEST_CASE("residual block keeps length and starts as its skip path") {
    ParamStore ps;
    int slot = 0;
    Rng rng(3);
    ResidualBlock rb = ResidualBlock::make(ps, "rb", 4, 4, 2, 8, slot, rng);

    Trace tr;
    tr.slot.resize(static_cast<std::size_t>(slot));
    tr.t_emb = time_embed(0.3, 8);
    Mat x = random_mat(rng, 4, 12);

    Mat y = rb.forward(ps, x, tr);
    CHECK(y.rows == 4);
    CHECK(y.cols == 12);

    // conv_mod is zero-initialized, so the output is exactly the res path
    Trace tr2;
    tr2.slot.resize(static_cast<std::size_t>(slot));
    Mat h_res = rb.conv_res.forward(ps, x, tr2);
    CHECK(y.v == h_res.v);
}

TEST_CASE("residual block reacts to the timestep once the mod path is live") {
    ParamStore ps;
    int slot = 0;
    Rng rng(4);
    ResidualBlock rb = ResidualBlock::make(ps, "rb", 4, 4, 2, 8, slot, rng);
    for (auto& w : ps[rb.conv_mod.w_id].w) w = rng.normal() * 0.1;

    Mat x = random_mat(rng, 4, 12);
    Trace tr;
    tr.slot.resize(static_cast<std::size_t>(slot));

    tr.t_emb = time_embed(0.0, 8);
    Mat y0 = rb.forward(ps, x, tr);
    tr.t_emb = time_embed(1.0, 8);
    Mat y1 = rb.forward(ps, x, tr);

    double mx = 0.0;
    for (std::size_t i = 0; i < y0.size(); ++i) mx = std::max(mx, std::abs(y0.v[i] - y1.v[i]));
    CHECK(mx > 0.0);
}

TEST_CASE("cross attention: single token attends fully, rows normalize") {
    ParamStore ps;
    int slot = 0;
    Rng rng(5);
    CrossAttentionBlock ab = CrossAttentionBlock::make(ps, "attn", 6, 8, 4, slot, rng);

    Trace tr;
    tr.slot.resize(static_cast<std::size_t>(slot));
    Mat h = random_mat(rng, 6, 10);

    Mat e1 = random_mat(rng, 1, 8);
    Mat y = ab.forward(ps, h, e1, {}, tr);
    CHECK(y.rows == 6);
    CHECK(y.cols == 10);
    Mat a = ab.attention_weights(tr);
    for (int i = 0; i < a.rows; ++i) CHECK(a(i, 0) == 1.0);

    Mat e5 = random_mat(rng, 5, 8);
    y = ab.forward(ps, h, e5, {}, tr);
    CHECK(y.rows == 6);
    CHECK(y.cols == 10);
    a = ab.attention_weights(tr);
    for (int i = 0; i < a.rows; ++i) {
        double row = 0.0;
        for (int m = 0; m < a.cols; ++m) row += a(i, m);
        CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("masked tokens do not influence attention") {
    ParamStore ps;
    int slot = 0;
    Rng rng(6);
    CrossAttentionBlock ab = CrossAttentionBlock::make(ps, "attn", 6, 8, 4, slot, rng);
    // give the output projection weight so attention actually matters
    for (auto& w : ps[ab.wo_id].w) w = rng.normal() * 0.2;

    Mat h = random_mat(rng, 6, 10);
    Mat e(4, 8);
    for (auto& v : e.v) v = rng.normal();
    for (int c = 0; c < 8; ++c) e(2, c) = 1e6;  // the masked row is extreme on purpose
    const std::vector<std::uint8_t> mask{1, 1, 0, 1};

    Trace tr;
    tr.slot.resize(static_cast<std::size_t>(slot));
    Mat with_mask = ab.forward(ps, h, e, mask, tr);

    Mat kept(3, 8);
    int r = 0;
    for (int i : {0, 1, 3}) {
        for (int c = 0; c < 8; ++c) kept(r, c) = e(i, c);
        ++r;
    }
    Mat without = ab.forward(ps, h, kept, {}, tr);
    for (std::size_t i = 0; i < with_mask.size(); ++i)
        CHECK(with_mask.v[i] == doctest::Approx(without.v[i]).epsilon(1e-12));

    const std::vector<std::uint8_t> none{0, 0, 0, 0};
    CHECK_THROWS_AS(ab.forward(ps, h, e, none, tr), std::invalid_argument);
}

TEST_CASE("forward maps length L to length L and is text sensitive") {
    NetConfig cfg = small_cfg();
    VelocityNet net = VelocityNet::build(cfg, 11);
    Rng rng(7);
    Trace tr = net.make_trace();

    const auto x = rng.normal_vec(32);
    Mat ea = random_mat(rng, 3, cfg.d_llm);
    Mat eb = random_mat(rng, 3, cfg.d_llm);

    const auto ya = net.forward(x, 0.5, ea, {}, tr);
    CHECK(ya.size() == 32);
    const auto yb = net.forward(x, 0.5, eb, {}, tr);
    CHECK(max_abs_diff(ya, yb) > 0.0);

    CHECK_THROWS_AS(net.forward(std::vector<double>(31, 0.0), 0.5, ea, {}, tr),
                    std::invalid_argument);
}

TEST_CASE("without attention levels the text is ignored") {
    NetConfig cfg = small_cfg();
    cfg.attention_levels = {};
    VelocityNet net = VelocityNet::build(cfg, 11);
    Rng rng(8);
    Trace tr = net.make_trace();
    const auto x = rng.normal_vec(32);
    Mat ea = random_mat(rng, 3, cfg.d_llm);
    Mat eb = random_mat(rng, 3, cfg.d_llm);
    const auto ya = net.forward(x, 0.5, ea, {}, tr);
    const auto yb = net.forward(x, 0.5, eb, {}, tr);
    CHECK(ya == yb);
}

TEST_CASE("initial output stays bounded for unit-Gaussian input") {
    VelocityNet net = VelocityNet::build(small_cfg(), 123);
    Rng rng(9);
    Trace tr = net.make_trace();
    Mat e = random_mat(rng, 4, 16);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = rng.normal_vec(32);
        const auto y = net.forward(x, rng.uniform(), e, {}, tr);
        for (double v : y) CHECK(std::abs(v) < 10.0);
    }
}

TEST_CASE("skip connections carry signal") {
    NetConfig cfg = small_cfg();
    VelocityNet net = VelocityNet::build(cfg, 19);
    Rng rng(10);
    Trace tr = net.make_trace();
    const auto x = rng.normal_vec(32);
    Mat e = random_mat(rng, 2, cfg.d_llm);
    const auto base = net.forward(x, 0.25, e, {}, tr);

    // zero the decoder weights that read the concatenated skip channels;
    // if skips were silently dropped this would be a no-op
    Param* w = net.params.find("dec0.conv_res.w");
    REQUIRE(w != nullptr);
    const int cout = w->shape[0], cin = w->shape[1], k = w->shape[2];
    REQUIRE(cin == 2 * cfg.channels(0));
    for (int o = 0; o < cout; ++o)
        for (int c = cfg.channels(0); c < cin; ++c)
            for (int j = 0; j < k; ++j)
                w->w[static_cast<std::size_t>((o * cin + c) * k + j)] = 0.0;

    const auto ablated = net.forward(x, 0.25, e, {}, tr);
    CHECK(max_abs_diff(base, ablated) > 0.0);
}

TEST_CASE("every parameter is reached by gradients after warmup") {
    NetConfig cfg = small_cfg();
    VelocityNet net = VelocityNet::build(cfg, 42);

    Rng rng(11);
    std::vector<TrainExample> ds;
    for (int i = 0; i < 4; ++i) {
        TrainExample ex;
        ex.series.resize(32);
        for (auto& v : ex.series) v = rng.uniform();
        ex.text = random_mat(rng, 3, cfg.d_llm);
        ds.push_back(std::move(ex));
    }
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch_size = 4;
    tc.learning_rate = 1e-3;
    tc.seed = 5;
    tc.optimizer = Optimizer::kAdamW;
    train(ds, net, tc);

    // accumulate both losses' gradients over a fresh batch
    net.params.zero_grads();
    Trace tr = net.make_trace();
    for (const auto& ex : ds) {
        const auto x0 = rng.normal_vec(32);
        const double t = rng.uniform();
        const auto xt = interpolate(x0, ex.series, t);
        const auto vt = target_velocity(x0, ex.series);
        const auto pred = net.forward(xt.x_t, t, ex.text, {}, tr);
        std::vector<double> dv(32);
        for (int i = 0; i < 32; ++i)
            dv[static_cast<std::size_t>(i)] = 2.0 * (pred[static_cast<std::size_t>(i)] - vt.v_t[static_cast<std::size_t>(i)]) / 32.0;
        net.backward(tr, dv);
        net.backward(tr, freq_loss_backward(pred, vt.v_t));
    }
    for (const auto& p : net.params.items) {
        double mx = 0.0;
        for (double g : p.g) mx = std::max(mx, std::abs(g));
        INFO("parameter ", p.name);
        CHECK(mx > 0.0);
    }
}
