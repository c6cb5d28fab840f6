#pragma once

#include "oled/grid.hpp"

namespace oled {

// He/Sun/Tang guided filter with clipped windows (each mean uses the actual
// in-bounds count). Box sums via integral images.
RealRaster guided_filter(const RealRaster& p, const RealRaster& guide, int radius,
                         double eps);

} // namespace oled
