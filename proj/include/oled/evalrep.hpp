#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <oled/grid.hpp>

namespace oled {

// Continuous image coordinates are (x, y) with pixel (r, c) centred at
// x = c, y = r.  y grows downward (row direction); "anticlockwise" paths
// are anticlockwise as displayed, i.e. y decreases first from 3 o'clock.

struct RoiSpec {
    int id = 0;
    std::array<double, 2> center_px{0.0, 0.0};  // (x, y)
    double radius_px = 1.0;
};

struct RoiStat {
    int id = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;  // population std (divide by n, not n-1)
    int n = 0;
};

// Per-ROI mean/std over masked pixels whose centres fall within the circle.
// Requires radius >= 1 and centre inside the raster extent; the circle is
// clipped to the raster, so an oversized radius degenerates to global stats.
// A ROI left empty by the mask is reported with n = 0.
std::vector<RoiStat> roi_stats(const RealRaster& t2, const MaskRaster& mask,
                               const std::vector<RoiSpec>& rois);

struct T2ErrorReport {
    double median_rel_err = 0.0;  // fraction, over masked pixels with ref > 0
    double mean_rel_err = 0.0;    // fraction
    double rmse_ms = 0.0;         // over all masked pixels
    RealRaster error_map_ms;      // signed est - ref, zero outside the mask
    // Worst ROI by percent deviation of the ROI means; id = -1 when no ROI
    // qualifies (none supplied, all empty, or ref mean <= 0).
    int worst_roi_id = -1;
    double worst_roi_dev_ms = 0.0;
    double worst_roi_dev_pct = 0.0;
};

T2ErrorReport t2_error_report(const RealRaster& est, const RealRaster& ref,
                              const MaskRaster& mask,
                              const std::vector<RoiSpec>& rois = {});

// Bilinear samples of t2 along the path; returns (arc length, value) pairs.
// Every coordinate must satisfy 0 <= x <= cols-1 and 0 <= y <= rows-1.
std::vector<std::pair<double, double>> profile_trace(
    const RealRaster& t2, const std::vector<std::array<double, 2>>& path_xy);

// Closed circular path: n_samples >= 2 points starting at 3 o'clock
// (center + (radius, 0)) and running anticlockwise; last point == first.
std::vector<std::array<double, 2>> circle_path(std::array<double, 2> center_xy,
                                               double radius_px, int n_samples);

// Report serialisation: JSON summary plus plain CSV tables.  std columns are
// population std; the CSV headers say so.
std::string report_to_json(const T2ErrorReport& report,
                           const std::vector<RoiStat>& stats = {});
void write_report_json(const std::string& path, const T2ErrorReport& report,
                       const std::vector<RoiStat>& stats = {});
void write_roi_stats_csv(const std::string& path,
                         const std::vector<RoiStat>& stats);
void write_profile_csv(const std::string& path,
                       const std::vector<std::pair<double, double>>& trace);

}  // namespace oled
