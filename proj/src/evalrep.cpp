#include <oled/evalrep.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include <oled/errors.hpp>

namespace oled {

namespace {

void require_roi(const RoiSpec& roi, const GridSpec& grid) {
    if (roi.radius_px < 1.0)
        throw ConfigError("roi " + std::to_string(roi.id) + ": radius < 1");
    const double x = roi.center_px[0], y = roi.center_px[1];
    if (!(x >= -0.5 && x <= grid.cols - 0.5 && y >= -0.5 && y <= grid.rows - 0.5))
        throw ConfigError("roi " + std::to_string(roi.id) + ": center outside raster");
}

// Visits masked pixels whose centres lie within the circle (clipped to grid).
template <typename Fn>
void for_each_roi_pixel(const RoiSpec& roi, const MaskRaster& mask, Fn&& fn) {
    const double cx = roi.center_px[0], cy = roi.center_px[1], rad = roi.radius_px;
    const int r0 = std::max(0, static_cast<int>(std::ceil(cy - rad)));
    const int r1 = std::min(mask.rows() - 1, static_cast<int>(std::floor(cy + rad)));
    const int c0 = std::max(0, static_cast<int>(std::ceil(cx - rad)));
    const int c1 = std::min(mask.cols() - 1, static_cast<int>(std::floor(cx + rad)));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const double dx = c - cx, dy = r - cy;
            if (dx * dx + dy * dy <= rad * rad && mask(r, c)) fn(r, c);
        }
}

std::FILE* open_or_throw(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    return f;
}

}  // namespace

std::vector<RoiStat> roi_stats(const RealRaster& t2, const MaskRaster& mask,
                               const std::vector<RoiSpec>& rois) {
    if (t2.rows() != mask.rows() || t2.cols() != mask.cols())
        throw ConfigError("roi_stats: raster/mask shape mismatch");
    const GridSpec grid{t2.rows(), t2.cols()};
    std::vector<RoiStat> out;
    out.reserve(rois.size());
    for (const auto& roi : rois) {
        require_roi(roi, grid);
        double sum = 0.0;
        int n = 0;
        for_each_roi_pixel(roi, mask, [&](int r, int c) {
            sum += t2(r, c);
            ++n;
        });
        RoiStat st;
        st.id = roi.id;
        st.n = n;
        if (n > 0) {
            st.mean_ms = sum / n;
            double ss = 0.0;
            for_each_roi_pixel(roi, mask, [&](int r, int c) {
                const double d = t2(r, c) - st.mean_ms;
                ss += d * d;
            });
            st.std_ms = std::sqrt(ss / n);
        }
        out.push_back(st);
    }
    return out;
}

T2ErrorReport t2_error_report(const RealRaster& est, const RealRaster& ref,
                              const MaskRaster& mask,
                              const std::vector<RoiSpec>& rois) {
    if (!est.same_shape(ref) || est.rows() != mask.rows() || est.cols() != mask.cols())
        throw ConfigError("t2_error_report: shape mismatch");

    T2ErrorReport rep;
    rep.error_map_ms = RealRaster(est.rows(), est.cols());

    std::vector<double> rel;
    double sq_sum = 0.0;
    long n_mask = 0;
    for (int r = 0; r < est.rows(); ++r)
        for (int c = 0; c < est.cols(); ++c) {
            if (!mask(r, c)) continue;
            const double d = est(r, c) - ref(r, c);
            rep.error_map_ms(r, c) = d;
            sq_sum += d * d;
            ++n_mask;
            if (ref(r, c) > 0.0) rel.push_back(std::abs(d) / ref(r, c));
        }
    if (n_mask == 0) throw ConfigError("t2_error_report: empty mask");
    if (rel.empty()) throw ConfigError("t2_error_report: no masked pixel has ref > 0");

    rep.rmse_ms = std::sqrt(sq_sum / n_mask);
    double rel_sum = 0.0;
    for (double v : rel) rel_sum += v;
    rep.mean_rel_err = rel_sum / static_cast<double>(rel.size());
    const size_t mid = rel.size() / 2;
    std::nth_element(rel.begin(), rel.begin() + mid, rel.end());
    if (rel.size() % 2 == 1) {
        rep.median_rel_err = rel[mid];
    } else {
        const double hi = rel[mid];
        const double lo = *std::max_element(rel.begin(), rel.begin() + mid);
        rep.median_rel_err = 0.5 * (lo + hi);
    }

    const auto est_stats = roi_stats(est, mask, rois);
    const auto ref_stats = roi_stats(ref, mask, rois);
    for (size_t i = 0; i < rois.size(); ++i) {
        if (ref_stats[i].n == 0 || ref_stats[i].mean_ms <= 0.0) continue;
        const double dev_ms = std::abs(est_stats[i].mean_ms - ref_stats[i].mean_ms);
        const double dev_pct = 100.0 * dev_ms / ref_stats[i].mean_ms;
        if (rep.worst_roi_id < 0 || dev_pct > rep.worst_roi_dev_pct) {
            rep.worst_roi_id = rois[i].id;
            rep.worst_roi_dev_ms = dev_ms;
            rep.worst_roi_dev_pct = dev_pct;
        }
    }
    return rep;
}

std::vector<std::pair<double, double>> profile_trace(
    const RealRaster& t2, const std::vector<std::array<double, 2>>& path_xy) {
    std::vector<std::pair<double, double>> out;
    out.reserve(path_xy.size());
    double arc = 0.0;
    for (size_t i = 0; i < path_xy.size(); ++i) {
        const double x = path_xy[i][0], y = path_xy[i][1];
        if (!(x >= 0.0 && x <= t2.cols() - 1.0 && y >= 0.0 && y <= t2.rows() - 1.0))
            throw ConfigError("profile_trace: coordinate out of bounds");
        if (i > 0) {
            const double dx = x - path_xy[i - 1][0], dy = y - path_xy[i - 1][1];
            arc += std::hypot(dx, dy);
        }
        const int c0 = std::min(static_cast<int>(std::floor(x)), t2.cols() - 2);
        const int r0 = std::min(static_cast<int>(std::floor(y)), t2.rows() - 2);
        const double fx = x - c0, fy = y - r0;
        const double v = (1 - fy) * ((1 - fx) * t2(r0, c0) + fx * t2(r0, c0 + 1)) +
                         fy * ((1 - fx) * t2(r0 + 1, c0) + fx * t2(r0 + 1, c0 + 1));
        out.emplace_back(arc, v);
    }
    return out;
}

std::vector<std::array<double, 2>> circle_path(std::array<double, 2> center_xy,
                                               double radius_px, int n_samples) {
    if (n_samples < 2) throw ConfigError("circle_path: need at least 2 samples");
    if (radius_px <= 0.0) throw ConfigError("circle_path: radius must be positive");
    std::vector<std::array<double, 2>> out;
    out.reserve(n_samples);
    for (int k = 0; k < n_samples; ++k) {
        const double th = 2.0 * std::numbers::pi * k / (n_samples - 1);
        out.push_back({center_xy[0] + radius_px * std::cos(th),
                       center_xy[1] - radius_px * std::sin(th)});
    }
    out.back() = out.front();  // exact closure
    return out;
}

std::string report_to_json(const T2ErrorReport& report,
                           const std::vector<RoiStat>& stats) {
    nlohmann::json j;
    j["median_rel_err"] = report.median_rel_err;
    j["mean_rel_err"] = report.mean_rel_err;
    j["rmse_ms"] = report.rmse_ms;
    j["std_convention"] = "population";
    if (report.worst_roi_id >= 0) {
        j["worst_roi"] = {{"id", report.worst_roi_id},
                          {"dev_ms", report.worst_roi_dev_ms},
                          {"dev_pct", report.worst_roi_dev_pct}};
    } else {
        j["worst_roi"] = nullptr;
    }
    if (!stats.empty()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& s : stats)
            arr.push_back({{"id", s.id}, {"mean_ms", s.mean_ms},
                           {"std_ms", s.std_ms}, {"n", s.n}});
        j["rois"] = arr;
    }
    return j.dump(2);
}

void write_report_json(const std::string& path, const T2ErrorReport& report,
                       const std::vector<RoiStat>& stats) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << report_to_json(report, stats) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

void write_roi_stats_csv(const std::string& path,
                         const std::vector<RoiStat>& stats) {
    std::FILE* f = open_or_throw(path);
    std::fprintf(f, "# std is population std (divide by n)\n");
    std::fprintf(f, "roi_id,mean_ms,std_ms,n\n");
    for (const auto& s : stats)
        std::fprintf(f, "%d,%.9g,%.9g,%d\n", s.id, s.mean_ms, s.std_ms, s.n);
    std::fclose(f);
}

void write_profile_csv(const std::string& path,
                       const std::vector<std::pair<double, double>>& trace) {
    std::FILE* f = open_or_throw(path);
    std::fprintf(f, "arc_px,t2_ms\n");
    for (const auto& [arc, v] : trace) std::fprintf(f, "%.9g,%.9g\n", arc, v);
    std::fclose(f);
}

}  // namespace oled
