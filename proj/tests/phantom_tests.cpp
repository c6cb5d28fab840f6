#include <doctest.h>

#include <cstdint>
#include <map>
#include <utility>

#include <oled/phantom.hpp>

using namespace oled;

namespace {

std::uint64_t fnv1a(const void* data, std::size_t nbytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < nbytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

GridSpec grid(int n) { return GridSpec{n, n, 22.0, 22.0}; }

} // namespace

TEST_SUITE("phantom") {

TEST_CASE("random phantoms are seed-deterministic and seed-sensitive") {
    RandomTemplateSpec spec;
    spec.seed = 11;
    const auto a = make_random_phantom(spec, grid(48));
    const auto b = make_random_phantom(spec, grid(48));
    CHECK(a.t2_ms == b.t2_ms);
    CHECK(a.pd == b.pd);
    spec.seed = 12;
    const auto c = make_random_phantom(spec, grid(48));
    CHECK_FALSE(a.t2_ms == c.t2_ms);
}

TEST_CASE("a single unsmoothed shape paints one constant region") {
    RandomTemplateSpec spec;
    spec.seed = 2; // first shape draw: a ellipse outside the long-T2 class
    spec.n_shapes_min = 1;
    spec.n_shapes_max = 1;
    spec.smooth_sigma_px = 0.0;
    const auto m = make_random_phantom(spec, grid(48));
    std::map<std::pair<double, double>, int> hist;
    for (std::int64_t i = 0; i < m.t2_ms.size(); ++i) ++hist[{m.t2_ms[i], m.pd[i]}];
    REQUIRE(hist.size() == 2); // background plus exactly one painted value
    CHECK(hist.count({0.0, 0.0}) == 1);
    for (const auto& [key, n] : hist) {
        if (key.first == 0.0) continue;
        CHECK(key.first >= spec.t2_range_ms[0]);
        CHECK(key.first <= spec.t2_range_ms[1]);
        CHECK(key.second >= spec.pd_range[0]);
        CHECK(key.second <= spec.pd_range[1]);
        CHECK(n > 10); // the ellipse actually landed on the raster
    }
}

TEST_CASE("value ranges hold over a hundred seeds") {
    RandomTemplateSpec spec;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        spec.seed = seed;
        const auto m = make_random_phantom(spec, grid(48));
        for (std::int64_t i = 0; i < m.t2_ms.size(); ++i) {
            const double t2 = m.t2_ms[i], pd = m.pd[i];
            CHECK(pd >= 0.0);
            CHECK(pd <= spec.pd_range[1]);
            if (pd > 0.0) {
                // Smoothing forms pd-weighted convex combinations, so T2
                // support stays inside the configured union of ranges.
                CHECK(t2 >= spec.t2_range_ms[0]);
                CHECK(t2 <= spec.csf_t2_range_ms[1]);
            } else {
                CHECK(t2 == 0.0);
            }
        }
    }
}

TEST_CASE("template spec validation") {
    RandomTemplateSpec bad;
    bad.t2_range_ms = {300.0, 30.0};
    CHECK_THROWS_AS(make_random_phantom(bad, grid(48)), ConfigError);
    bad = RandomTemplateSpec{};
    bad.n_shapes_min = 0;
    CHECK_THROWS_AS(make_random_phantom(bad, grid(48)), ConfigError);
    bad = RandomTemplateSpec{};
    bad.n_shapes_min = 9;
    bad.n_shapes_max = 3;
    CHECK_THROWS_AS(make_random_phantom(bad, grid(48)), ConfigError);
    bad = RandomTemplateSpec{};
    bad.csf_fraction = 1.5;
    CHECK_THROWS_AS(make_random_phantom(bad, grid(48)), ConfigError);
    bad = RandomTemplateSpec{};
    bad.pd_range = {0.3, 1.2};
    CHECK_THROWS_AS(make_random_phantom(bad, grid(48)), ConfigError);
    bad = RandomTemplateSpec{};
    bad.smooth_sigma_px = -1.0;
    CHECK_THROWS_AS(make_random_phantom(bad, grid(48)), ConfigError);
    CHECK_THROWS_AS(make_random_phantom(RandomTemplateSpec{}, GridSpec{4, 48, 22.0, 22.0}),
                    ConfigError);
}

TEST_CASE("layered head phantom uses the documented class palette") {
    const auto m = make_brain_phantom(grid(128));
    // (T2 ms, pd) per class: background, skull ring, white matter, grey
    // matter, fluid pockets.
    const std::map<std::pair<double, double>, int> palette = {
        {{0.0, 0.0}, 0},   {{40.0, 0.25}, 0},  {{80.0, 0.75}, 0},
        {{110.0, 0.85}, 0}, {{1500.0, 1.0}, 0},
    };
    std::map<std::pair<double, double>, int> hist;
    for (std::int64_t i = 0; i < m.t2_ms.size(); ++i) ++hist[{m.t2_ms[i], m.pd[i]}];
    REQUIRE(hist.size() == palette.size()); // all classes present, nothing else
    for (const auto& [key, n] : hist) {
        CHECK(palette.count(key) == 1);
        CHECK(n > 0);
    }
    // Fluid T2 exceeds white matter T2.
    CHECK(1500.0 > 80.0);
    // Background outside the head: grid corners stay empty.
    for (const int r : {0, 127})
        for (const int c : {0, 127}) {
            CHECK(m.pd(r, c) == 0.0);
            CHECK(m.t2_ms(r, c) == 0.0);
        }
}

TEST_CASE("head phantom rasters are pinned bit-for-bit") {
    const auto m = make_brain_phantom(grid(128));
    CHECK(fnv1a(m.t2_ms.data(), sizeof(double) * m.t2_ms.size()) == 0x0159159ac6044fe3ULL);
    CHECK(fnv1a(m.pd.data(), sizeof(double) * m.pd.size()) == 0x64bada5ad1d14a93ULL);
    // Shape is resolution-invariant: the same classes appear at half size.
    const auto s = make_brain_phantom(grid(64));
    std::map<double, int> hist;
    for (std::int64_t i = 0; i < s.t2_ms.size(); ++i) ++hist[s.t2_ms[i]];
    CHECK(hist.size() == 5);
}

TEST_CASE("downsample block-averages pd and pd-weights t2") {
    TissueMap src{grid(16), RealRaster(16, 16), RealRaster(16, 16)};
    // Top-left 2x2 block: pd (1,1,0,0) with T2 (100,200,-,-).
    src.pd(0, 0) = 1.0;
    src.pd(0, 1) = 1.0;
    src.t2_ms(0, 0) = 100.0;
    src.t2_ms(0, 1) = 200.0;
    // Next block over: uniform tissue.
    src.pd(0, 2) = src.pd(0, 3) = src.pd(1, 2) = src.pd(1, 3) = 0.5;
    src.t2_ms(0, 2) = src.t2_ms(0, 3) = src.t2_ms(1, 2) = src.t2_ms(1, 3) = 70.0;

    const auto d = downsample(src, grid(8));
    CHECK(d.pd(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(d.t2_ms(0, 0) == doctest::Approx(150.0).epsilon(1e-15));
    CHECK(d.pd(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(d.t2_ms(0, 1) == doctest::Approx(70.0).epsilon(1e-15));
    // Empty block: no signal, no T2.
    CHECK(d.pd(4, 4) == 0.0);
    CHECK(d.t2_ms(4, 4) == 0.0);

    CHECK_THROWS_AS(downsample(src, GridSpec{12, 12, 22.0, 22.0}), ConfigError);
}

TEST_CASE("downsampling in stages matches downsampling at once") {
    RandomTemplateSpec spec;
    spec.seed = 31;
    const auto m = make_random_phantom(spec, grid(32));
    const auto two_step = downsample(downsample(m, grid(16)), grid(8));
    const auto one_step = downsample(m, grid(8));
    for (std::int64_t i = 0; i < one_step.t2_ms.size(); ++i) {
        CHECK(two_step.pd[i] == doctest::Approx(one_step.pd[i]).epsilon(1e-12));
        CHECK(two_step.t2_ms[i] == doctest::Approx(one_step.t2_ms[i]).epsilon(1e-12));
    }
}

} // TEST_SUITE