#pragma once

#include <optional>
#include <vector>

#include "oled/grid.hpp"
#include "oled/seqsim.hpp"

namespace oled {

enum class KappaMode { fixed, median_ratio };

// Solver knobs for the echo-separation energy
//   ||x0 - x1 e^{i phi1} - x2 e^{i phi2}||^2
//     + l1 ||M grad x1||_1 + l2 ||M grad x2||_1 + l3 ||M grad(x1 - k x2)||_1.
// Unset lambdas resolve to (5e-3, 5e-3, 1e-2) x max|x0| at solve time so the
// balance is intensity-invariant; edge_sigma is likewise relative to max|x0|.
struct DetachParams {
    std::optional<double> lambda1{};
    std::optional<double> lambda2{};
    std::optional<double> lambda3{};
    KappaMode kappa_mode = KappaMode::fixed;
    // fixed mode: the value to use; unset = estimate once from the windowed
    // initializer, then freeze (keeps the objective fixed, hence the trace
    // monotone). median_ratio re-estimates every outer iteration.
    std::optional<double> kappa{};
    double edge_sigma = 0.08;
    int max_outer_iters = 400;
    double pd_threshold = 0.05;
    double tol = 1e-5;

    void require_valid() const;
};

struct DetachResult {
    ComplexImage x1; // demodulated: phase ramps removed
    ComplexImage x2;
    std::vector<double> objective_trace;
    RealRaster t2_ms;
    MaskRaster mask;
    bool converged = false;
    double kappa_used = 1.0;
};

struct T2MapResult {
    RealRaster t2_ms;
    MaskRaster mask;
};

// M(r) = 1 / (1 + |grad |x0_smooth|(r)| / edge_sigma) in (0, 1]; x0_smooth is
// a sigma = 2 px Gaussian blur of the magnitude (enough to flatten the
// fringes the two overlapped phase ramps beat into |x0|). edge_sigma here is
// absolute (units of intensity per pixel).
RealRaster edge_weight_matrix(const ComplexImage& x0, double edge_sigma);

// Separates the overlapped pair by proximal-gradient outer iterations with an
// exact-to-tolerance inner dual solve of the three coupled weighted-TV
// proxes. x0 is expected to have the double spin echo already notched out.
DetachResult detach_echoes(const ComplexImage& x0, const SequenceParams& params,
                           const DetachParams& dp);

// median|x1| / median|x2| over the joint support {|x1|>0 and |x2|>0}.
double kappa_estimate(const ComplexImage& x1, const ComplexImage& x2);

// T2 = (te2 - te1) / ln[(|x1|/a1)/(|x2|/a2)] on pixels where |x1| clears
// pd_threshold x max|x1| and the ratio is physical (> 1); clamped to
// [1, 5000] ms. Everything else is masked out with t2 = 0.
T2MapResult t2_from_echoes(const ComplexImage& x1, const ComplexImage& x2,
                           const EchoAmplitudes& amp, double te1_ms,
                           double te2_ms, double pd_threshold);

} // namespace oled
