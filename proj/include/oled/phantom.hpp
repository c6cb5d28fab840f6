#pragma once

#include <array>
#include <cstdint>

#include "oled/grid.hpp"

namespace oled {

// Recipe for one seeded random training template: overlapping ellipses and
// convex polygons with piecewise-constant T2/PD on a zero background.
struct RandomTemplateSpec {
    std::uint64_t seed = 0;
    int n_shapes_min = 5;
    int n_shapes_max = 30;
    std::array<double, 2> t2_range_ms{30.0, 300.0};
    std::array<double, 2> csf_t2_range_ms{500.0, 2000.0};
    double csf_fraction = 0.2;
    std::array<double, 2> pd_range{0.3, 1.0};
    double smooth_sigma_px = 0.7;

    void require_valid() const;
};

TissueMap make_random_phantom(const RandomTemplateSpec& spec, const GridSpec& grid);

// Fixed layered head phantom (background / skull ring / WM / GM / CSF
// pockets); deterministic, no RNG, shape is resolution-invariant.
TissueMap make_brain_phantom(const GridSpec& grid);

// Block-average pd; pd-weighted block-average of T2 (0 where the block has no
// signal). Target dims must divide source dims.
TissueMap downsample(const TissueMap& map, const GridSpec& target);

} // namespace oled
