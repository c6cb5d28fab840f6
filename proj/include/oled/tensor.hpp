#pragma once

#include <cstdint>
#include <vector>

#include "oled/errors.hpp"

namespace oled {

// Dense rank-4 array, row-major (batch, channel, height, width).
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, T fill = T{})
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    T& at(int b, int ch, int y, int x) {
        return data[((static_cast<size_t>(b) * c + ch) * h + y) * w + x];
    }
    const T& at(int b, int ch, int y, int x) const {
        return data[((static_cast<size_t>(b) * c + ch) * h + y) * w + x];
    }
    T* row(int b, int ch, int y) {
        return data.data() + ((static_cast<size_t>(b) * c + ch) * h + y) * w;
    }
    const T* row(int b, int ch, int y) const {
        return data.data() + ((static_cast<size_t>(b) * c + ch) * h + y) * w;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

} // namespace oled
