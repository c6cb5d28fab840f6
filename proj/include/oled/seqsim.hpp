#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "oled/grid.hpp"

namespace oled {

// One overlapping-echo acquisition: two excitations alpha, one refocusing
// beta, echo centers displaced in k-space by per-echo gradient offsets.
// Shift vectors are (x, y) in cycles per FOV; defaults assume a 128x128
// acquisition grid.
struct SequenceParams {
    double alpha_deg = 45.0;
    double beta_deg = 180.0;
    double te1_ms = 22.0;
    double te2_ms = 68.0;
    std::array<double, 2> shift1_cyc{-32.0, -32.0};
    std::array<double, 2> shift2_cyc{32.0, 32.0};
    std::array<double, 2> shift3_cyc{0.0, 64.0};
    std::optional<double> snr_db{};

    double delta_te_ms() const { return te2_ms - te1_ms; }
    void require_valid() const;
};

// Prefactors of the three echo families: a1 first spin echo, a2 second spin
// echo, a3 double spin echo.
struct EchoAmplitudes {
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;
};

// Closed-form amplitudes:
//   a1 = 1/2 |sin a cos a| (1 - cos b)
//   a2 = 1/4 |sin a| (1 + cos a)(1 - cos b)
//   a3 = 1/4 |sin a| (1 - cos a)(1 - cos b)
EchoAmplitudes echo_amplitudes(double alpha_deg, double beta_deg);

// Single-voxel rotation-matrix simulation of the pulse train with 2-D pulse
// phase cycling to separate the three coherence pathways; T2 decay divided
// out. Independent check of echo_amplitudes.
EchoAmplitudes simulate_isochromat(double alpha_deg, double beta_deg,
                                   double te1_ms, double te2_ms, double t2_ms);

// Image-domain composite of the three echoes:
//   x0(r) = sum_j a_j pd(r) e^{-TE_j/T2(r)} e^{i 2 pi shift_j . r / FOV}
// with TE_3 = TE_1 (the double spin echo refocuses at the first echo time).
ComplexImage forward_oled(const TissueMap& map, const SequenceParams& params);

// Conventional spin-echo image pd(r) e^{-te/T2(r)} (real-valued).
ComplexImage forward_se(const TissueMap& map, double te_ms, const GridSpec& grid);

// Adds i.i.d. circular complex Gaussian noise with per-component std
// delta_n = mu_s / 10^(snr_db/20), mu_s = mean magnitude over nonzero pixels.
// +inf snr returns the input unchanged.
ComplexImage add_noise(const ComplexImage& img, double snr_db, std::uint64_t seed);

} // namespace oled
