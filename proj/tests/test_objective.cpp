// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowgen/net.hpp"
#include "flowgen/objective.hpp"
#include "flowgen/rng.hpp"
#include "oracles.hpp"

using namespace flowgen;

namespace {

NetConfig tiny_cfg() {
    NetConfig cfg;
    cfg.length = 16;
    cfg.base_channels = 4;
    cfg.channel_multipliers = {1, 2};
    cfg.groups = 2;
    cfg.d_llm = 8;
    cfg.d_k = 4;
    cfg.attention_levels = {1};
    return cfg;
}

Mat random_text(Rng& rng, int m, int d) {
    Mat e(m, d);
    for (auto& v : e.v) v = rng.normal();
    return e;
}

}  // namespace

TEST_CASE("time_loss basics") {
    CHECK(time_loss(std::vector<double>{1, 1}, std::vector<double>{1, 1}) == 0.0);
    CHECK(time_loss(std::vector<double>{0, 0}, std::vector<double>{2, 0}) == doctest::Approx(2.0));
    CHECK(time_loss(std::vector<double>{1}, std::vector<double>{0}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(time_loss(std::vector<double>{1, 2}, std::vector<double>{1}),
                    std::invalid_argument);
}

TEST_CASE("freq_loss matches hand-computed spectra") {
    Rng rng(11);
    std::vector<double> x(16);
    for (auto& v : x) v = rng.normal();
    CHECK(freq_loss(x, x) == 0.0);

    // a one-step shift changes phase only
    std::vector<double> a{1, 0, 0, 0}, b{0, 1, 0, 0};
    CHECK(freq_loss(a, b) == doctest::Approx(0.0).epsilon(1e-12));

    // |F([1,1,1,1])| = [4,0,0] one-sided, mean over the 3 bins
    std::vector<double> ones{1, 1, 1, 1}, zeros{0, 0, 0, 0};
    CHECK(freq_loss(ones, zeros) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(freq_loss(std::vector<double>{1}, std::vector<double>{1}),
                    std::invalid_argument);
}

TEST_CASE("freq_loss is invariant to a shared circular shift") {
    Rng rng(5);
    std::vector<double> x(12), y(12);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const double base = freq_loss(x, y);
    for (int shift : {1, 5, 11}) {
        std::vector<double> xs(12), ys(12);
        for (int i = 0; i < 12; ++i) {
            xs[(i + shift) % 12] = x[i];
            ys[(i + shift) % 12] = y[i];
        }
        CHECK(freq_loss(xs, ys) == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("mgda_alpha closed form") {
    std::vector<double> g{0.3, -0.4, 1.0};
    CHECK(mgda_alpha(g, g) == 0.5);  // degenerate tie-break
    CHECK(mgda_alpha(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == doctest::Approx(0.5));
    CHECK(mgda_alpha(std::vector<double>{2, 0}, std::vector<double>{0, 1}) == doctest::Approx(0.2));
    CHECK_THROWS_AS(mgda_alpha(std::vector<double>{1}, std::vector<double>{1, 2}),
                    std::invalid_argument);
}

TEST_CASE("mgda_alpha agrees with the grid-search minimizer") {
    Rng rng(42);
    for (int trial = 0; trial < 150; ++trial) {
        const int p = 2 + static_cast<int>(rng.below(18));
        std::vector<double> gt(p), gf(p);
        for (auto& v : gt) v = rng.normal();
        for (auto& v : gf) v = rng.normal();
        const double a = mgda_alpha(gt, gf);
        const double a_grid = oracles::grid_search_alpha(gt, gf);
        // the closed form can only do better than the grid
        CHECK(oracles::combined_norm2(gt, gf, a) <=
              oracles::combined_norm2(gt, gf, a_grid) + 1e-12);
        CHECK(std::abs(a - a_grid) <= 1e-3 + 1e-12);
    }
}

TEST_CASE("mgda direction descends on both objectives") {
    Rng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        const int p = 2 + static_cast<int>(rng.below(10));
        std::vector<double> gt(p), gf(p);
        for (auto& v : gt) v = rng.normal();
        for (auto& v : gf) v = rng.normal();
        const double a = mgda_alpha(gt, gf);
        const auto d = combine_gradients(gt, gf, a);
        double dt = 0.0, df = 0.0;
        for (int i = 0; i < p; ++i) {
            dt += d[static_cast<std::size_t>(i)] * gt[static_cast<std::size_t>(i)];
            df += d[static_cast<std::size_t>(i)] * gf[static_cast<std::size_t>(i)];
        }
        CHECK(dt >= -1e-12);
        CHECK(df >= -1e-12);
    }
}

TEST_CASE("combine_gradients endpoints and arithmetic") {
    std::vector<double> gt{2, 0}, gf{0, 1};
    CHECK(combine_gradients(gt, gf, 1.0) == gt);
    CHECK(combine_gradients(gt, gf, 0.0) == gf);
    const auto d = combine_gradients(gt, gf, 0.2);
    CHECK(d[0] == doctest::Approx(0.4));
    CHECK(d[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(combine_gradients(gt, gf, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(combine_gradients(gt, std::vector<double>{1}, 0.5), std::invalid_argument);
}

TEST_CASE("backprop gradients match finite differences on a tiny net") {
    NetConfig cfg = tiny_cfg();
    VelocityNet net = VelocityNet::build(cfg, 99);
    REQUIRE(net.parameter_count() <= 5000);

    Rng rng(3);
    std::vector<GradCheckSample> batch;
    for (int b = 0; b < 2; ++b) {
        GradCheckSample s;
        s.x_t = rng.normal_vec(16);
        s.t = rng.uniform();
        s.text = random_text(rng, 3, cfg.d_llm);
        s.v_target = rng.normal_vec(16);
        batch.push_back(std::move(s));
    }
    const double max_rel = grad_check(net, batch, 1e-5);
    CHECK(max_rel < 1e-3);
}

TEST_CASE("time gradient of the final bias vanishes at the optimum") {
    NetConfig cfg = tiny_cfg();
    VelocityNet net = VelocityNet::build(cfg, 4);
    // all-zero final layer makes the net constant-zero
    Param* w = net.params.find("out_conv.w");
    Param* b = net.params.find("out_conv.b");
    REQUIRE(w != nullptr);
    REQUIRE(b != nullptr);
    std::fill(w->w.begin(), w->w.end(), 0.0);
    std::fill(b->w.begin(), b->w.end(), 0.0);

    Rng rng(8);
    Trace tr = net.make_trace();
    Mat text = random_text(rng, 2, cfg.d_llm);
    const auto x = rng.normal_vec(16);
    const auto v = net.forward(x, 0.4, text, {}, tr);
    std::vector<double> target(16, 0.0);

    net.params.zero_grads();
    std::vector<double> dv(16);
    for (int i = 0; i < 16; ++i) dv[static_cast<std::size_t>(i)] = 2.0 * (v[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]) / 16.0;
    net.backward(tr, dv);
    for (double g : b->g) CHECK(g == 0.0);
}

TEST_CASE("loss csv schema") {
    CHECK(loss_csv_header() == "step,l_time,l_freq,alpha,g_time_norm,g_freq_norm");
    LossReport r;
    r.step = 3;
    r.l_time = 0.5;
    r.l_freq = 0.25;
    r.g_time_norm = 1.0;
    r.g_freq_norm = 2.0;
    CHECK(loss_csv_row(r) == "3,0.5,0.25,,1,2");
    r.alpha = 0.75;
    CHECK(loss_csv_row(r) == "3,0.5,0.25,0.75,1,2");
}
