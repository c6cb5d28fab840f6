#include "oled/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "oled/imageops.hpp"
#include "oled/rng.hpp"

namespace oled {

namespace {

struct Ellipse {
    double cy, cx, a, b, cosr, sinr;

    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double u = dx * cosr + dy * sinr;
        const double v = -dx * sinr + dy * cosr;
        return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
    }
};

// Vertices in angular order on an ellipse, hence convex.
struct Polygon {
    std::vector<double> ys, xs;

    bool contains(double y, double x) const {
        const size_t n = ys.size();
        for (size_t i = 0; i < n; ++i) {
            const size_t j = (i + 1) % n;
            const double cross =
                (xs[j] - xs[i]) * (y - ys[i]) - (ys[j] - ys[i]) * (x - xs[i]);
            if (cross < 0.0) return false;
        }
        return true;
    }
};

void paint(RealRaster& t2, RealRaster& pd, double t2_val, double pd_val,
           double y_lo, double y_hi, double x_lo, double x_hi,
           const auto& shape) {
    const int r0 = std::max(0, static_cast<int>(std::floor(y_lo)));
    const int r1 = std::min(t2.rows() - 1, static_cast<int>(std::ceil(y_hi)));
    const int c0 = std::max(0, static_cast<int>(std::floor(x_lo)));
    const int c1 = std::min(t2.cols() - 1, static_cast<int>(std::ceil(x_hi)));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            if (shape.contains(r + 0.5, c + 0.5)) {
                t2(r, c) = t2_val;
                pd(r, c) = pd_val;
            }
}

} // namespace

void RandomTemplateSpec::require_valid() const {
    const bool ranges_ok = t2_range_ms[0] > 0.0 && t2_range_ms[0] <= t2_range_ms[1] &&
                           csf_t2_range_ms[0] > 0.0 && csf_t2_range_ms[0] <= csf_t2_range_ms[1] &&
                           pd_range[0] >= 0.0 && pd_range[0] <= pd_range[1] && pd_range[1] <= 1.0;
    if (!ranges_ok || n_shapes_min < 1 || n_shapes_min > n_shapes_max ||
        csf_fraction < 0.0 || csf_fraction > 1.0 || smooth_sigma_px < 0.0)
        throw ConfigError("invalid RandomTemplateSpec");
}

TissueMap make_random_phantom(const RandomTemplateSpec& spec, const GridSpec& grid) {
    grid.require_valid();
    spec.require_valid();

    rng::Stream rs(spec.seed);
    const int rows = grid.rows, cols = grid.cols;
    RealRaster t2(rows, cols), pd(rows, cols);

    const double smin = 0.04 * std::min(rows, cols);
    const double smax = 0.22 * std::min(rows, cols);
    const int n_shapes =
        static_cast<int>(rs.uniform_int(spec.n_shapes_min, spec.n_shapes_max));

    double t2_painted_lo = spec.csf_t2_range_ms[1], t2_painted_hi = spec.t2_range_ms[0];
    for (int s = 0; s < n_shapes; ++s) {
        const bool is_poly = rs.uniform() < 0.5;
        const bool is_csf = rs.uniform() < spec.csf_fraction;
        const auto& t2r = is_csf ? spec.csf_t2_range_ms : spec.t2_range_ms;
        const double t2_val = rs.uniform(t2r[0], t2r[1]);
        const double pd_val = rs.uniform(spec.pd_range[0], spec.pd_range[1]);
        t2_painted_lo = std::min(t2_painted_lo, t2_val);
        t2_painted_hi = std::max(t2_painted_hi, t2_val);

        Ellipse e;
        e.cy = rs.uniform(0.0, rows);
        e.cx = rs.uniform(0.0, cols);
        e.a = rs.uniform(smin, smax);
        e.b = rs.uniform(smin, smax);
        const double rot = rs.uniform(0.0, M_PI);
        e.cosr = std::cos(rot);
        e.sinr = std::sin(rot);
        const double reach = std::max(e.a, e.b);

        if (!is_poly) {
            paint(t2, pd, t2_val, pd_val, e.cy - reach, e.cy + reach,
                  e.cx - reach, e.cx + reach, e);
        } else {
            const int k = static_cast<int>(rs.uniform_int(3, 7));
            std::vector<double> ang(k);
            for (double& a : ang) a = rs.uniform(0.0, 2.0 * M_PI);
            std::sort(ang.begin(), ang.end());
            Polygon p;
            for (double a : ang) {
                const double u = e.a * std::cos(a), v = e.b * std::sin(a);
                p.xs.push_back(e.cx + u * e.cosr - v * e.sinr);
                p.ys.push_back(e.cy + u * e.sinr + v * e.cosr);
            }
            paint(t2, pd, t2_val, pd_val, e.cy - reach, e.cy + reach,
                  e.cx - reach, e.cx + reach, p);
        }
    }

    if (spec.smooth_sigma_px > 0.0) {
        // Blur T2 weighted by pd: smoothed T2 stays a convex combination of
        // painted values, so histogram support never leaves the configured
        // ranges (clamp guards the last-ulp of the quotient).
        RealRaster t2pd(rows, cols);
        for (std::int64_t i = 0; i < t2pd.size(); ++i) t2pd[i] = t2[i] * pd[i];
        const RealRaster bpd = gaussian_blur(pd, spec.smooth_sigma_px);
        const RealRaster bt2pd = gaussian_blur(t2pd, spec.smooth_sigma_px);
        for (std::int64_t i = 0; i < t2pd.size(); ++i) {
            if (bpd[i] > 1e-12) {
                pd[i] = bpd[i];
                t2[i] = std::clamp(bt2pd[i] / bpd[i], t2_painted_lo, t2_painted_hi);
            } else {
                pd[i] = 0.0;
                t2[i] = 0.0;
            }
        }
    }

    return TissueMap{grid, std::move(t2), std::move(pd)};
}

TissueMap make_brain_phantom(const GridSpec& grid) {
    grid.require_valid();
    const int rows = grid.rows, cols = grid.cols;
    RealRaster t2(rows, cols), pd(rows, cols);

    // Class constants (T2 ms, pd): skull ring 40/0.25, WM 80/0.75,
    // GM 110/0.85, CSF pockets 1500/1.0. Geometry in normalized coordinates
    // u,v in [-1,1] so the phantom scales with the grid.
    const auto csf_pocket = [](double u, double v, double sign) {
        const double th = sign * 0.35;
        const double du = u - sign * 0.16, dv = v + 0.08;
        const double ru = du * std::cos(th) + dv * std::sin(th);
        const double rv = -du * std::sin(th) + dv * std::cos(th);
        return (ru / 0.10) * (ru / 0.10) + (rv / 0.28) * (rv / 0.28) <= 1.0;
    };

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double u = (c + 0.5 - cols / 2.0) / (cols / 2.0);
            const double v = (r + 0.5 - rows / 2.0) / (rows / 2.0);
            const double e_out = (u / 0.82) * (u / 0.82) + (v / 0.94) * (v / 0.94);
            const double e_in = (u / 0.74) * (u / 0.74) + (v / 0.86) * (v / 0.86);
            const double e_wm = (u / 0.52) * (u / 0.52) + (v / 0.64) * (v / 0.64);
            if (e_out > 1.0) continue;
            if (e_in > 1.0) {
                t2(r, c) = 40.0;
                pd(r, c) = 0.25;
            } else if (csf_pocket(u, v, 1.0) || csf_pocket(u, v, -1.0)) {
                t2(r, c) = 1500.0;
                pd(r, c) = 1.0;
            } else if (e_wm <= 1.0) {
                t2(r, c) = 80.0;
                pd(r, c) = 0.75;
            } else {
                t2(r, c) = 110.0;
                pd(r, c) = 0.85;
            }
        }

    return TissueMap{grid, std::move(t2), std::move(pd)};
}

TissueMap downsample(const TissueMap& map, const GridSpec& target) {
    map.grid.require_valid();
    target.require_valid();
    if (map.grid.rows % target.rows != 0 || map.grid.cols % target.cols != 0)
        throw ConfigError("downsample: target dims must divide source dims");

    const int fr = map.grid.rows / target.rows;
    const int fc = map.grid.cols / target.cols;
    RealRaster t2(target.rows, target.cols), pd(target.rows, target.cols);

    for (int r = 0; r < target.rows; ++r)
        for (int c = 0; c < target.cols; ++c) {
            double sum_pd = 0.0, sum_t2pd = 0.0;
            for (int i = 0; i < fr; ++i)
                for (int j = 0; j < fc; ++j) {
                    const double p = map.pd(r * fr + i, c * fc + j);
                    sum_pd += p;
                    sum_t2pd += map.t2_ms(r * fr + i, c * fc + j) * p;
                }
            pd(r, c) = sum_pd / (fr * fc);
            t2(r, c) = sum_pd > 0.0 ? sum_t2pd / sum_pd : 0.0;
        }

    return TissueMap{target, std::move(t2), std::move(pd)};
}

} // namespace oled
