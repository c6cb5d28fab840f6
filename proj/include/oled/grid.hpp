#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "oled/errors.hpp"

namespace oled {

// Sampling grid over a physical field of view.
struct GridSpec {
    int rows = 0;
    int cols = 0;
    double fov_x_cm = 22.0;
    double fov_y_cm = 22.0;

    bool valid() const {
        return rows >= 8 && cols >= 8 && fov_x_cm > 0.0 && fov_y_cm > 0.0;
    }
    void require_valid() const {
        if (!valid())
            throw ConfigError("invalid GridSpec: need rows,cols >= 8 and positive FOV");
    }
    bool same_shape(const GridSpec& o) const { return rows == o.rows && cols == o.cols; }
    std::int64_t size() const { return static_cast<std::int64_t>(rows) * cols; }
};

// Dense row-major 2-D raster.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::int64_t size() const { return static_cast<std::int64_t>(rows_) * cols_; }
    bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
    T& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool same_shape(const Raster& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Raster& a, const Raster& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using RealRaster = Raster<double>;
using MaskRaster = Raster<std::uint8_t>;

// Per-voxel T2 (ms) and proton density over a grid; the simulation ground truth.
// T2 is 0 (and meaningless) wherever pd is 0.
struct TissueMap {
    GridSpec grid;
    RealRaster t2_ms;
    RealRaster pd;
};

enum class Domain { image, kspace };

// 2-D complex raster with grid metadata, either image-domain or k-space.
struct ComplexImage {
    GridSpec grid;
    Domain domain = Domain::image;
    Raster<std::complex<double>> data;
};

inline ComplexImage make_complex_image(const GridSpec& g, Domain d = Domain::image) {
    return ComplexImage{g, d, Raster<std::complex<double>>(g.rows, g.cols)};
}

} // namespace oled
