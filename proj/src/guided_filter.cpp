#include "oled/guided_filter.hpp"

#include <algorithm>
#include <vector>

namespace oled {

namespace {

// S(i, j) = sum over [0, i) x [0, j).
std::vector<double> integral_image(const RealRaster& a) {
    const int rows = a.rows(), cols = a.cols();
    std::vector<double> s(static_cast<size_t>(rows + 1) * (cols + 1), 0.0);
    const auto at = [cols](std::vector<double>& v, int r, int c) -> double& {
        return v[static_cast<size_t>(r) * (cols + 1) + c];
    };
    for (int r = 0; r < rows; ++r) {
        double rowsum = 0.0;
        for (int c = 0; c < cols; ++c) {
            rowsum += a(r, c);
            at(s, r + 1, c + 1) = at(s, r, c + 1) + rowsum;
        }
    }
    return s;
}

struct BoxMean {
    const std::vector<double>& s;
    int rows, cols, radius;

    double operator()(int r, int c) const {
        const int r0 = std::max(r - radius, 0), r1 = std::min(r + radius, rows - 1);
        const int c0 = std::max(c - radius, 0), c1 = std::min(c + radius, cols - 1);
        const auto at = [this](int i, int j) {
            return s[static_cast<size_t>(i) * (cols + 1) + j];
        };
        const double sum = at(r1 + 1, c1 + 1) - at(r0, c1 + 1) - at(r1 + 1, c0) + at(r0, c0);
        return sum / ((r1 - r0 + 1) * (c1 - c0 + 1));
    }
};

RealRaster box_mean(const RealRaster& a, int radius) {
    const BoxMean bm{integral_image(a), a.rows(), a.cols(), radius};
    RealRaster out(a.rows(), a.cols());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) out(r, c) = bm(r, c);
    return out;
}

} // namespace

RealRaster guided_filter(const RealRaster& p, const RealRaster& guide, int radius,
                         double eps) {
    if (!p.same_shape(guide)) throw ConfigError("guided_filter: shape mismatch");
    if (radius < 1 || eps <= 0.0)
        throw ConfigError("guided_filter: need radius >= 1 and eps > 0");

    const int rows = p.rows(), cols = p.cols();
    RealRaster ip(rows, cols), ii(rows, cols);
    for (std::int64_t i = 0; i < p.size(); ++i) {
        ip[i] = guide[i] * p[i];
        ii[i] = guide[i] * guide[i];
    }

    const RealRaster mean_i = box_mean(guide, radius);
    const RealRaster mean_p = box_mean(p, radius);
    const RealRaster mean_ip = box_mean(ip, radius);
    const RealRaster mean_ii = box_mean(ii, radius);

    RealRaster a(rows, cols), b(rows, cols);
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double var = mean_ii[i] - mean_i[i] * mean_i[i];
        const double cov = mean_ip[i] - mean_i[i] * mean_p[i];
        a[i] = cov / (var + eps);
        b[i] = mean_p[i] - a[i] * mean_i[i];
    }

    const RealRaster mean_a = box_mean(a, radius);
    const RealRaster mean_b = box_mean(b, radius);
    RealRaster out(rows, cols);
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = mean_a[i] * guide[i] + mean_b[i];
    return out;
}

} // namespace oled
