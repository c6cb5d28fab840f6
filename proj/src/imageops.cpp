#include "oled/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oled {

namespace {

// Reflect index into [0, n) (symmetric, edge pixel not repeated: -1 -> 1).
inline int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

} // namespace

RealRaster gaussian_blur(const RealRaster& src, double sigma_px) {
    if (sigma_px <= 0.0) return src;
    const auto k = gaussian_kernel(sigma_px);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    const int rows = src.rows(), cols = src.cols();

    RealRaster tmp(rows, cols), out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * src(r, reflect(c + i, cols));
            tmp(r, c) = acc;
        }
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp(reflect(r + i, rows), c);
            out(r, c) = acc;
        }
    return out;
}

RealRaster gradient_magnitude(const RealRaster& src) {
    const int rows = src.rows(), cols = src.cols();
    RealRaster out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int r0 = std::max(r - 1, 0), r1 = std::min(r + 1, rows - 1);
            const int c0 = std::max(c - 1, 0), c1 = std::min(c + 1, cols - 1);
            const double gy = (src(r1, c) - src(r0, c)) / (r1 - r0);
            const double gx = (src(r, c1) - src(r, c0)) / (c1 - c0);
            out(r, c) = std::hypot(gx, gy);
        }
    return out;
}

MaskRaster erode(const MaskRaster& mask, int radius) {
    const int rows = mask.rows(), cols = mask.cols();
    MaskRaster out(rows, cols, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            bool keep = true;
            for (int dr = -radius; keep && dr <= radius; ++dr)
                for (int dc = -radius; keep && dc <= radius; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols || !mask(rr, cc))
                        keep = false;
                }
            out(r, c) = keep ? 1 : 0;
        }
    return out;
}

RealRaster magnitude(const ComplexImage& img) {
    RealRaster out(img.grid.rows, img.grid.cols);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(img.data[i]);
    return out;
}

double max_abs(const ComplexImage& img) {
    double m = 0.0;
    for (std::int64_t i = 0; i < img.data.size(); ++i) m = std::max(m, std::abs(img.data[i]));
    return m;
}

} // namespace oled
