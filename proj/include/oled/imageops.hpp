#pragma once

#include "oled/grid.hpp"

namespace oled {

// Separable Gaussian blur, reflective boundary. sigma_px <= 0 returns a copy.
RealRaster gaussian_blur(const RealRaster& src, double sigma_px);

// Central-difference gradient magnitude, one-sided at the borders.
RealRaster gradient_magnitude(const RealRaster& src);

// Binary erosion with a (2*radius+1)^2 square structuring element.
MaskRaster erode(const MaskRaster& mask, int radius);

RealRaster magnitude(const ComplexImage& img);

double max_abs(const ComplexImage& img);

} // namespace oled
