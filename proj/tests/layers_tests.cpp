#include <doctest.h>

#include <cmath>
#include <vector>

#include <oled/layers.hpp>
#include <oled/rng.hpp>

#include "test_util.hpp"

using namespace oled;
using testutil::fill_random;

namespace {

// Literal definition of same-padded cross-correlation; the production kernels
// must agree with this to fp accumulation error.
template <typename T>
Tensor4<T> conv_naive(const Tensor4<T>& x, const Tensor4<T>& w,
                      const std::vector<T>& bias) {
    const int k = w.h, pad = k / 2;
    Tensor4<T> y(x.n, w.n, x.h, x.w);
    for (int b = 0; b < x.n; ++b)
        for (int o = 0; o < w.n; ++o)
            for (int i = 0; i < x.h; ++i)
                for (int j = 0; j < x.w; ++j) {
                    double acc = bias[o];
                    for (int ic = 0; ic < x.c; ++ic)
                        for (int d = 0; d < k; ++d)
                            for (int e = 0; e < k; ++e) {
                                const int yy = i + d - pad, xx = j + e - pad;
                                if (yy < 0 || yy >= x.h || xx < 0 || xx >= x.w)
                                    continue;
                                acc += double(w.row(o, ic, d)[e]) *
                                       x.at(b, ic, yy, xx);
                            }
                    y.at(b, o, i, j) = static_cast<T>(acc);
                }
    return y;
}

template <typename T>
double dot(const std::vector<T>& a, const std::vector<T>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
    return s;
}

} // namespace

TEST_SUITE("layers") {

TEST_CASE("conv forward matches the naive definition across shapes") {
    rng::Stream rs(42);
    // (n, ci, co, h, w, k) covering: channel counts off the 32-block, widths
    // off the pixel-quad, 1x1 kernels, single channels.
    const int shapes[][6] = {
        {2, 2, 64, 9, 9, 3},  {1, 64, 64, 8, 8, 3}, {2, 3, 5, 7, 6, 3},
        {1, 1, 1, 8, 9, 5},   {2, 64, 1, 6, 7, 3},  {1, 33, 40, 5, 5, 1},
        {3, 16, 32, 10, 3, 3}};
    for (const auto& s : shapes) {
        CAPTURE(s[1]);
        CAPTURE(s[2]);
        Tensor4<double> x(s[0], s[1], s[3], s[4]), w(s[2], s[1], s[5], s[5]);
        std::vector<double> bias(s[2]);
        fill_random(x, rs);
        fill_random(w, rs);
        for (auto& b : bias) b = rs.uniform(-1.0, 1.0);
        const auto y = conv2d_forward(x, w, bias);
        const auto ref = conv_naive(x, w, bias);
        REQUIRE(y.same_shape(ref));
        CHECK(testutil::max_rel_diff(y.data, ref.data) < 1e-12);
    }
}

TEST_CASE("conv backward is the exact adjoint of forward") {
    rng::Stream rs(7);
    const int shapes[][6] = {
        {2, 2, 64, 9, 9, 3}, {1, 64, 64, 8, 8, 3}, {2, 3, 5, 7, 6, 3},
        {2, 64, 1, 6, 7, 3}, {1, 33, 40, 5, 5, 1}};
    for (const auto& s : shapes) {
        Tensor4<double> x(s[0], s[1], s[3], s[4]), w(s[2], s[1], s[5], s[5]);
        Tensor4<double> dy(s[0], s[2], s[3], s[4]);
        std::vector<double> bias(s[2], 0.0);
        fill_random(x, rs);
        fill_random(w, rs);
        fill_random(dy, rs);

        Tensor4<double> dx, dw;
        std::vector<double> db;
        conv2d_backward(x, w, dy, dx, dw, db);

        // Bilinear form: <dy, conv(x, w)> equals both <dx, x> and <dw, w>
        // (bias zero), and db is the bias direction.
        const auto y = conv2d_forward(x, w, bias);
        const double lhs = dot(dy.data, y.data);
        CHECK(std::abs(lhs - dot(dx.data, x.data)) <
              1e-10 * std::max(1.0, std::abs(lhs)));
        CHECK(std::abs(lhs - dot(dw.data, w.data)) <
              1e-10 * std::max(1.0, std::abs(lhs)));
        std::vector<double> ones_bias(s[2], 1.0);
        const auto yb = conv2d_forward(x, w, ones_bias);
        double bias_term = 0.0;
        for (std::int64_t i = 0; i < yb.size(); ++i)
            bias_term += dy.data[i] * (yb.data[i] - y.data[i]);
        CHECK(std::abs(bias_term - dot(db, ones_bias)) <
              1e-10 * std::max(1.0, std::abs(bias_term)));
    }
}

TEST_CASE("conv rejects malformed shapes") {
    Tensor4<double> x(1, 2, 8, 8), w_even(3, 2, 2, 2), w_chan(3, 4, 3, 3),
        w_rect(3, 2, 3, 5);
    std::vector<double> b3(3, 0.0), b2(2, 0.0);
    CHECK_THROWS_AS(conv2d_forward(x, w_even, b2), ConfigError);
    CHECK_THROWS_AS(conv2d_forward(x, w_chan, b3), ConfigError);
    CHECK_THROWS_AS(conv2d_forward(x, w_rect, b3), ConfigError);
    Tensor4<double> w(3, 2, 3, 3);
    CHECK_THROWS_AS(conv2d_forward(x, w, b2), ConfigError);
    Tensor4<double> dy_bad(1, 3, 7, 8), dx, dw;
    std::vector<double> db;
    CHECK_THROWS_AS(conv2d_backward(x, w, dy_bad, dx, dw, db), ConfigError);
}

TEST_CASE("batchnorm training normalizes and tracks running stats") {
    rng::Stream rs(3);
    Tensor4<double> x(4, 3, 5, 5);
    fill_random(x, rs, -2.0, 5.0);
    std::vector<double> gamma{1.5, 1.0, 0.5}, beta{0.1, 0.0, -0.2};
    std::vector<double> run_mean(3, 0.0), run_var(3, 1.0);
    BnCache<double> cache;
    const auto y =
        batchnorm_forward(x, gamma, beta, run_mean, run_var, true, &cache);

    for (int ch = 0; ch < 3; ++ch) {
        // Direct per-channel statistics over (batch, h, w).
        double mean = 0.0, var = 0.0;
        const std::int64_t per = 4 * 5 * 5;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 25; ++i) mean += x.row(b, ch, 0)[i];
        mean /= per;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 25; ++i) {
                const double d = x.row(b, ch, 0)[i] - mean;
                var += d * d;
            }
        var /= per; // biased
        // Output channel moments: mean beta, std |gamma| (up to eps).
        double om = 0.0, ov = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 25; ++i) om += y.row(b, ch, 0)[i];
        om /= per;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 25; ++i) {
                const double d = y.row(b, ch, 0)[i] - om;
                ov += d * d;
            }
        ov /= per;
        CHECK(om == doctest::Approx(beta[ch]).epsilon(1e-9));
        CHECK(std::sqrt(ov) ==
              doctest::Approx(std::abs(gamma[ch]) *
                              std::sqrt(var / (var + kBnEps)))
                  .epsilon(1e-9));
        CHECK(run_mean[ch] == doctest::Approx(kBnMomentum * mean).epsilon(1e-12));
        CHECK(run_var[ch] ==
              doctest::Approx((1.0 - kBnMomentum) * 1.0 + kBnMomentum * var)
                  .epsilon(1e-12));
    }
}

TEST_CASE("batchnorm inference uses running statistics only") {
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {10.0, 12.0, 14.0, 16.0};
    std::vector<double> gamma{2.0}, beta{1.0}, run_mean{13.0}, run_var{4.0};
    const auto y = batchnorm_forward(x, gamma, beta, run_mean, run_var, false,
                                     static_cast<BnCache<double>*>(nullptr));
    for (int i = 0; i < 4; ++i) {
        const double expect =
            2.0 * (x.data[i] - 13.0) / std::sqrt(4.0 + kBnEps) + 1.0;
        CHECK(y.data[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(run_mean[0] == 13.0); // untouched
    CHECK(run_var[0] == 4.0);
}

TEST_CASE("batchnorm backward matches numerical gradients") {
    rng::Stream rs(11);
    Tensor4<double> x(2, 2, 3, 3), dy(2, 2, 3, 3);
    fill_random(x, rs);
    fill_random(dy, rs);
    std::vector<double> gamma{1.3, 0.8}, beta{0.2, -0.1};

    auto loss = [&](const Tensor4<double>& xx, const std::vector<double>& g,
                    const std::vector<double>& bt) {
        std::vector<double> rm(2, 0.0), rv(2, 1.0);
        BnCache<double> c;
        const auto y = batchnorm_forward(xx, g, bt, rm, rv, true, &c);
        return dot(dy.data, y.data);
    };

    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    BnCache<double> cache;
    batchnorm_forward(x, gamma, beta, rm, rv, true, &cache);
    Tensor4<double> dx;
    std::vector<double> dgamma, dbeta;
    batchnorm_backward(cache, gamma, dy, dx, dgamma, dbeta);

    const double h = 1e-6;
    for (std::int64_t i = 0; i < x.size(); i += 5) {
        Tensor4<double> xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        const double num = (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * h);
        CHECK(num == doctest::Approx(dx.data[i]).epsilon(1e-5));
    }
    for (int ch = 0; ch < 2; ++ch) {
        auto gp = gamma, gm = gamma;
        gp[ch] += h;
        gm[ch] -= h;
        CHECK((loss(x, gp, beta) - loss(x, gm, beta)) / (2 * h) ==
              doctest::Approx(dgamma[ch]).epsilon(1e-5));
        auto bp = beta, bm = beta;
        bp[ch] += h;
        bm[ch] -= h;
        CHECK((loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * h) ==
              doctest::Approx(dbeta[ch]).epsilon(1e-5));
    }
}

TEST_CASE("relu forward/backward") {
    Tensor4<double> x(1, 1, 1, 4);
    x.data = {-1.0, 0.0, 2.0, -0.5};
    const auto y = relu_forward(x);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0, 0.0});
    Tensor4<double> dy(1, 1, 1, 4);
    dy.data = {3.0, 4.0, 5.0, 6.0};
    const auto dx = relu_backward(x, dy);
    CHECK(dx.data == std::vector<double>{0.0, 0.0, 5.0, 0.0});
}

TEST_CASE("sgd_update follows the classical momentum recursion") {
    // Hand-tracked scalar: v <- mu v - lr (g + wd w); w <- w + v.
    std::vector<double> w{1.0}, v{0.0};
    const double lr = 0.1, mu = 0.9, wd = 0.01;
    std::vector<double> g{2.0};
    sgd_update(w, v, g, lr, mu, wd);
    // v1 = -0.1*(2 + 0.01*1) = -0.201; w1 = 0.799
    CHECK(v[0] == doctest::Approx(-0.201).epsilon(1e-12));
    CHECK(w[0] == doctest::Approx(0.799).epsilon(1e-12));
    g[0] = -1.0;
    sgd_update(w, v, g, lr, mu, wd);
    // v2 = 0.9*(-0.201) - 0.1*(-1 + 0.00799) = -0.1809 + 0.099201 = -0.081699
    CHECK(v[0] == doctest::Approx(-0.081699).epsilon(1e-10));
    CHECK(w[0] == doctest::Approx(0.799 - 0.081699).epsilon(1e-10));
    std::vector<double> bad{1.0, 2.0};
    CHECK_THROWS_AS(sgd_update(w, v, bad, lr, mu, wd), ConfigError);
}

TEST_CASE("lr_at selects the last boundary at or before the iteration") {
    const std::vector<std::pair<int, double>> sched{
        {0, 0.1}, {32000, 0.01}, {64000, 0.001}};
    CHECK(lr_at(sched, 0) == 0.1);
    CHECK(lr_at(sched, 31999) == 0.1);
    CHECK(lr_at(sched, 32000) == 0.01);
    CHECK(lr_at(sched, 63999) == 0.01);
    CHECK(lr_at(sched, 64000) == 0.001);
    CHECK(lr_at(sched, 1000000) == 0.001);
    CHECK_THROWS_AS(lr_at({}, 0), ConfigError);
}

TEST_CASE("mse_loss pinned example and batch normalization") {
    // One sample, one pixel, difference 3: loss 9, gradient 6.
    Tensor4<double> p(1, 1, 1, 1), t(1, 1, 1, 1), grad;
    p.data = {5.0};
    t.data = {2.0};
    CHECK(mse_loss(p, t, grad) == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(grad.data[0] == doctest::Approx(6.0).epsilon(1e-15));

    // Two samples: loss is the mean of per-sample squared Frobenius norms.
    Tensor4<double> p2(2, 1, 1, 2), t2(2, 1, 1, 2), g2;
    p2.data = {1.0, 2.0, 3.0, 4.0};
    t2.data = {0.0, 0.0, 0.0, 0.0};
    // (1+4)/2 + (9+16)/2 = 15
    CHECK(mse_loss(p2, t2, g2) == doctest::Approx(15.0).epsilon(1e-15));
    CHECK(g2.data[0] == doctest::Approx(2.0 * 1.0 / 2.0).epsilon(1e-15));
    CHECK(g2.data[3] == doctest::Approx(2.0 * 4.0 / 2.0).epsilon(1e-15));

    Tensor4<double> wrong(1, 1, 1, 3);
    CHECK_THROWS_AS(mse_loss(p, wrong, grad), ConfigError);
}

} // TEST_SUITE
