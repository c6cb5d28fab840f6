#include "oled/kspace.hpp"

#include <cmath>
#include <mutex>

#include <fftw3.h>

namespace oled {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

// Cyclic roll: out(r, c) = in((r + dr) mod rows, (c + dc) mod cols).
Raster<std::complex<double>> roll(const Raster<std::complex<double>>& in, int dr, int dc) {
    const int rows = in.rows(), cols = in.cols();
    Raster<std::complex<double>> out(rows, cols);
    dr = ((dr % rows) + rows) % rows;
    dc = ((dc % cols) + cols) % cols;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out(r, c) = in((r + dr) % rows, (c + dc) % cols);
    return out;
}

ComplexImage transform(const ComplexImage& in, Domain expect, Domain produce, int sign) {
    if (in.domain != expect)
        throw ConfigError("fft2/ifft2: input domain tag does not match direction");
    in.grid.require_valid();
    const int rows = in.grid.rows, cols = in.grid.cols;

    // ifftshift in, fftshift out makes DC land on (rows/2, cols/2).
    Raster<std::complex<double>> buf = roll(in.data, rows / 2, cols / 2);

    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_plan plan = fftw_plan_dft_2d(
            rows, cols, reinterpret_cast<fftw_complex*>(buf.data()),
            reinterpret_cast<fftw_complex*>(buf.data()), sign, FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
    for (auto& v : buf) v *= scale;

    ComplexImage out{in.grid, produce, roll(buf, -(rows / 2), -(cols / 2))};
    return out;
}

double wrap_to_half(double d, double period) {
    return d - period * std::round(d / period);
}

} // namespace

ComplexImage fft2_centered(const ComplexImage& img) {
    return transform(img, Domain::image, Domain::kspace, FFTW_FORWARD);
}

ComplexImage ifft2_centered(const ComplexImage& k) {
    return transform(k, Domain::kspace, Domain::image, FFTW_BACKWARD);
}

ComplexImage apply_echo_filter(const ComplexImage& k, const GaussianEchoFilter& f) {
    if (k.domain != Domain::kspace)
        throw ConfigError("apply_echo_filter: expected k-space input");
    if (f.sigma_cyc <= 0.0) throw ConfigError("apply_echo_filter: sigma_cyc must be > 0");

    const int rows = k.grid.rows, cols = k.grid.cols;
    ComplexImage out = k;
    for (int r = 0; r < rows; ++r) {
        const double dy = wrap_to_half(r - rows / 2 - f.center_cyc[1], rows);
        for (int c = 0; c < cols; ++c) {
            const double dx = wrap_to_half(c - cols / 2 - f.center_cyc[0], cols);
            const double g =
                std::exp(-(dx * dx + dy * dy) / (2.0 * f.sigma_cyc * f.sigma_cyc));
            out.data(r, c) *= f.mode == FilterMode::pass ? g : 1.0 - g;
        }
    }
    return out;
}

double default_filter_sigma_cyc(const GridSpec& grid) {
    return std::min(grid.rows, grid.cols) / 16.0;
}

RemoveDoubleEchoResult remove_double_echo(const ComplexImage& img,
                                          const SequenceParams& params,
                                          std::optional<double> sigma_cyc) {
    if (img.domain != Domain::image)
        throw ConfigError("remove_double_echo: expected image-domain input");
    params.require_valid();
    const double sigma = sigma_cyc.value_or(default_filter_sigma_cyc(img.grid));

    const auto torus_dist = [&](const std::array<double, 2>& a,
                                const std::array<double, 2>& b) {
        const double dx = wrap_to_half(a[0] - b[0], img.grid.cols);
        const double dy = wrap_to_half(a[1] - b[1], img.grid.rows);
        return std::hypot(dx, dy);
    };
    const bool warn = torus_dist(params.shift3_cyc, params.shift1_cyc) < 3.0 * sigma ||
                      torus_dist(params.shift3_cyc, params.shift2_cyc) < 3.0 * sigma;

    GaussianEchoFilter f{params.shift3_cyc, sigma, FilterMode::reject};
    ComplexImage filtered = apply_echo_filter(fft2_centered(img), f);
    return {ifft2_centered(filtered), warn};
}

ComplexImage zero_pad(const ComplexImage& k, const GridSpec& target) {
    if (k.domain != Domain::kspace)
        throw ConfigError("zero_pad: expected k-space input");
    target.require_valid();
    if (target.rows < k.grid.rows || target.cols < k.grid.cols)
        throw ConfigError("zero_pad: target must be at least the source size");

    ComplexImage out = make_complex_image(target, Domain::kspace);
    const int r_off = target.rows / 2 - k.grid.rows / 2;
    const int c_off = target.cols / 2 - k.grid.cols / 2;
    for (int r = 0; r < k.grid.rows; ++r)
        for (int c = 0; c < k.grid.cols; ++c)
            out.data(r + r_off, c + c_off) = k.data(r, c);
    return out;
}

} // namespace oled
