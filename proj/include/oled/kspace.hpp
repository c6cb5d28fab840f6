#pragma once

#include <array>
#include <optional>

#include "oled/grid.hpp"
#include "oled/seqsim.hpp"

namespace oled {

enum class FilterMode { pass, reject };

// Isotropic Gaussian weight in centered k-space. Distances are measured on
// the torus (the DFT spectrum is periodic), so a filter centered on the
// Nyquist bin behaves identically on both wrapped copies.
struct GaussianEchoFilter {
    std::array<double, 2> center_cyc{0.0, 0.0}; // (x, y), cycles/FOV
    double sigma_cyc = 1.0;
    FilterMode mode = FilterMode::reject;
};

// Unitary centered 2-D DFT pair: DC at (rows/2, cols/2), scale 1/sqrt(rows*cols)
// each direction, so Parseval holds exactly.
ComplexImage fft2_centered(const ComplexImage& img);
ComplexImage ifft2_centered(const ComplexImage& k);

// Multiplies by g(k) = exp(-|k - center|^2 / (2 sigma^2)) (pass) or 1 - g
// (reject).
ComplexImage apply_echo_filter(const ComplexImage& k, const GaussianEchoFilter& f);

// Default notch width: min(rows, cols)/16 cycles/FOV.
double default_filter_sigma_cyc(const GridSpec& grid);

struct RemoveDoubleEchoResult {
    ComplexImage image;
    // Set when shift3 lies within 3 sigma of shift1 or shift2 (torus metric):
    // the notch then bites into the echoes being kept.
    bool proximity_warning = false;
};

// fft2 -> reject filter at shift3 -> ifft2. sigma_cyc defaults to
// default_filter_sigma_cyc of the image grid.
RemoveDoubleEchoResult remove_double_echo(const ComplexImage& img,
                                          const SequenceParams& params,
                                          std::optional<double> sigma_cyc = {});

// Symmetric zero-padding in centered k-space; the image-domain result is
// sinc-interpolated upsampling. Under the unitary convention image energy is
// preserved while pointwise image values scale by
// sqrt(src_rows*src_cols/(dst_rows*dst_cols)).
ComplexImage zero_pad(const ComplexImage& k, const GridSpec& target);

} // namespace oled
