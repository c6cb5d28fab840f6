#include "oled/seqsim.hpp"

#include <cmath>
#include <complex>
#include <limits>

#include "oled/rng.hpp"

namespace oled {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

struct Vec3 {
    double x, y, z;
};

// Pulse of flip theta about an axis at azimuth phi: Rz(phi) Rx(theta) Rz(-phi).
Vec3 pulse(const Vec3& m, double theta, double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    double mx = m.x * c + m.y * s;
    double my = -m.x * s + m.y * c;
    double mz = m.z;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double my2 = my * ct - mz * st;
    const double mz2 = my * st + mz * ct;
    my = my2;
    mz = mz2;
    return {mx * c - my * s, mx * s + my * c, mz};
}

} // namespace

void SequenceParams::require_valid() const {
    const bool angles_ok = alpha_deg > 0.0 && alpha_deg < 180.0 &&
                           beta_deg > 0.0 && beta_deg <= 180.0;
    const bool times_ok = te1_ms > 0.0 && te2_ms > te1_ms;
    const bool shifts_ok = shift1_cyc != shift2_cyc && shift1_cyc != shift3_cyc &&
                           shift2_cyc != shift3_cyc;
    if (!angles_ok || !times_ok || !shifts_ok)
        throw ConfigError("invalid SequenceParams: need 0<alpha<180, 0<beta<=180, "
                          "te2>te1>0, pairwise distinct shifts");
}

EchoAmplitudes echo_amplitudes(double alpha_deg, double beta_deg) {
    const double a = alpha_deg * kDegToRad, b = beta_deg * kDegToRad;
    const double sa = std::sin(a), ca = std::cos(a), ocb = 1.0 - std::cos(b);
    return {0.5 * std::abs(sa * ca) * ocb,
            0.25 * std::abs(sa) * (1.0 + ca) * ocb,
            0.25 * std::abs(sa) * (1.0 - ca) * ocb};
}

EchoAmplitudes simulate_isochromat(double alpha_deg, double beta_deg,
                                   double te1_ms, double te2_ms, double t2_ms) {
    if (t2_ms <= 0.0) throw ConfigError("simulate_isochromat: t2_ms must be > 0");
    if (te2_ms <= te1_ms || te1_ms <= 0.0)
        throw ConfigError("simulate_isochromat: need te2 > te1 > 0");

    const double alpha = alpha_deg * kDegToRad, beta = beta_deg * kDegToRad;
    // Second excitation at ta, refocusing at tb; these place the first spin
    // echo (excited by pulse 2) at transverse age te1 and the second (excited
    // by pulse 1) at te2.
    const double ta = 0.5 * (te2_ms - te1_ms);
    const double tb = 0.5 * te2_ms;
    const double e_a = std::exp(-ta / t2_ms);
    const double e_ab = std::exp(-(tb - ta) / t2_ms);

    // Pathways are separated by cycling the phases of pulse 2 and the
    // refocusing pulse. A pulse multiplies a pathway by e^{i dp phi} where dp
    // is its coherence-order change; the echo families carry
    // (dp2, dpb) = (-1,+2), (0,+2), (-2,+2) and are the only detected
    // pathways with dpb = +2, so an 8x4 cycle separates them exactly.
    constexpr int Na = 8, Nb = 4;
    std::complex<double> s1{}, s2{}, s3{};
    for (int ja = 0; ja < Na; ++ja) {
        const double pa = 2.0 * M_PI * ja / Na;
        for (int jb = 0; jb < Nb; ++jb) {
            const double pb = 2.0 * M_PI * jb / Nb;
            Vec3 m{0.0, 0.0, 1.0};
            m = pulse(m, alpha, 0.0);
            m.x *= e_a;
            m.y *= e_a;
            m = pulse(m, alpha, pa);
            m.x *= e_ab;
            m.y *= e_ab;
            m = pulse(m, beta, pb);
            const std::complex<double> sig{m.x, m.y};
            const std::complex<double> wb = std::polar(1.0, -2.0 * pb);
            s1 += sig * std::polar(1.0, 1.0 * pa) * wb;
            s2 += sig * wb;
            s3 += sig * std::polar(1.0, 2.0 * pa) * wb;
        }
    }
    const double inv = 1.0 / (Na * Nb);
    // Divide out the transverse decay each pathway accumulated by the
    // detection point (just after refocusing): pathway 1 was transverse for
    // tb - ta, pathways 2 and 3 for all of tb.
    return {std::abs(s1) * inv / e_ab,
            std::abs(s2) * inv / (e_a * e_ab),
            std::abs(s3) * inv / (e_a * e_ab)};
}

ComplexImage forward_oled(const TissueMap& map, const SequenceParams& params) {
    map.grid.require_valid();
    params.require_valid();
    const EchoAmplitudes amp = echo_amplitudes(params.alpha_deg, params.beta_deg);
    const int rows = map.grid.rows, cols = map.grid.cols;

    ComplexImage out = make_complex_image(map.grid, Domain::image);
    const std::array<std::array<double, 2>, 3> shifts{params.shift1_cyc,
                                                      params.shift2_cyc,
                                                      params.shift3_cyc};
    const std::array<double, 3> amps{amp.a1, amp.a2, amp.a3};
    const std::array<double, 3> tes{params.te1_ms, params.te2_ms, params.te1_ms};

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double pd = map.pd(r, c);
            if (pd <= 0.0) continue;
            const double t2 = map.t2_ms(r, c);
            std::complex<double> acc{};
            for (int j = 0; j < 3; ++j) {
                const double decay = t2 > 0.0 ? std::exp(-tes[j] / t2) : 0.0;
                const double phase = 2.0 * M_PI * (shifts[j][0] * c / cols +
                                                   shifts[j][1] * r / rows);
                acc += amps[j] * pd * decay * std::polar(1.0, phase);
            }
            out.data(r, c) = acc;
        }
    return out;
}

ComplexImage forward_se(const TissueMap& map, double te_ms, const GridSpec& grid) {
    if (te_ms <= 0.0) throw ConfigError("forward_se: te_ms must be > 0");
    grid.require_valid();
    if (!grid.same_shape(map.grid))
        throw ConfigError("forward_se: grid shape must match the tissue map");

    ComplexImage out = make_complex_image(grid, Domain::image);
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const double pd = map.pd(r, c), t2 = map.t2_ms(r, c);
            if (pd > 0.0 && t2 > 0.0)
                out.data(r, c) = pd * std::exp(-te_ms / t2);
        }
    return out;
}

ComplexImage add_noise(const ComplexImage& img, double snr_db, std::uint64_t seed) {
    if (img.domain != Domain::image)
        throw ConfigError("add_noise: expected an image-domain input");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw ConfigError("add_noise: snr_db must be finite or +inf");
    if (snr_db == std::numeric_limits<double>::infinity()) return img;

    double mu = 0.0;
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < img.data.size(); ++i) {
        const double m = std::abs(img.data[i]);
        if (m > 0.0) {
            mu += m;
            ++n;
        }
    }
    if (n == 0) throw ConfigError("add_noise: zero-signal image, SNR undefined");
    mu /= n;
    const double sigma = mu / std::pow(10.0, snr_db / 20.0);

    ComplexImage out = img;
    rng::Stream rs(seed);
    for (std::int64_t i = 0; i < out.data.size(); ++i) {
        const auto [g1, g2] = rs.gaussian_pair();
        out.data[i] += std::complex<double>(sigma * g1, sigma * g2);
    }
    return out;
}

} // namespace oled
