#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "oled/tensor.hpp"

namespace oled {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

namespace conv_detail {

inline constexpr int kChanBlock = 32;  // accumulator block along the SIMD axis
inline constexpr int kPixBlock = 4;    // output pixels sharing one weight sweep

// Zero-padded copy of one sample: [c][h+2p][w+2p].
template <typename T>
void pad_sample(const Tensor4<T>& x, int b, int pad, std::vector<T>& xp) {
    const int hp = x.h + 2 * pad, wp = x.w + 2 * pad;
    xp.assign(static_cast<size_t>(x.c) * hp * wp, T{});
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < x.h; ++i)
            std::copy(x.row(b, c, i), x.row(b, c, i) + x.w,
                      xp.data() + (static_cast<size_t>(c) * hp + i + pad) * wp + pad);
}

// PX adjacent output pixels of one LEN-wide channel block. Compile-time
// bounds keep acc[][] fully unrolled into vector registers: per tap the loop
// body is PX broadcasts against one shared weight vector. `wt` walks the
// transposed layout [tap][channel] and is pre-offset to the block; `bias` may
// be null. Output channel stride is `cstride`.
template <typename T, int LEN, int PX>
void gather_block(const T* xp, int hp, int wp, int i, int j, int n_in, int k,
                  const T* wt, int wstride, const T* bias, T* out, size_t cstride) {
    T acc[PX][LEN];
    for (int p = 0; p < PX; ++p)
        for (int l = 0; l < LEN; ++l) acc[p][l] = bias ? bias[l] : T{};
    const T* ww = wt;
    for (int ic = 0; ic < n_in; ++ic)
        for (int d = 0; d < k; ++d) {
            const T* xrow = xp + (static_cast<size_t>(ic) * hp + i + d) * wp + j;
            for (int e = 0; e < k; ++e, ww += wstride)
                for (int p = 0; p < PX; ++p) {
                    const T xv = xrow[e + p];
                    for (int l = 0; l < LEN; ++l) acc[p][l] += xv * ww[l];
                }
        }
    for (int p = 0; p < PX; ++p)
        for (int l = 0; l < LEN; ++l) out[static_cast<size_t>(l) * cstride + p] = acc[p][l];
}

// Variable-length single-pixel fallback for channel-count remainders.
template <typename T>
void gather_var(const T* xp, int hp, int wp, int i, int j, int n_in, int k,
                const T* wt, int wstride, int len, const T* bias, T* out,
                size_t cstride) {
    T acc[kChanBlock];
    for (int l = 0; l < len; ++l) acc[l] = bias ? bias[l] : T{};
    const T* ww = wt;
    for (int ic = 0; ic < n_in; ++ic)
        for (int d = 0; d < k; ++d) {
            const T* xrow = xp + (static_cast<size_t>(ic) * hp + i + d) * wp + j;
            for (int e = 0; e < k; ++e, ww += wstride) {
                const T xv = xrow[e];
                for (int l = 0; l < len; ++l) acc[l] += xv * ww[l];
            }
        }
    for (int l = 0; l < len; ++l) out[static_cast<size_t>(l) * cstride] = acc[l];
}

// Weight-gradient reduction for taps (e0..e0+KE) of one (in_c, ky) row: the
// KE x LEN accumulators stay in registers across the whole image, each pixel
// contributing broadcast(x) * gradient-vector products. `gT` is the upstream
// gradient transposed to [pixel][channel]; results accumulate into dst, laid
// out [tap][channel] with stride n_out and pre-offset to the channel block.
template <typename T, int LEN, int KE>
void reduce_taps(const T* xp, int hp, int wp, int ic, int d, int e0, const T* gT,
                 int height, int width, int n_out, int ob, T* dst) {
    T acc[KE][LEN];
    for (int e = 0; e < KE; ++e)
        for (int l = 0; l < LEN; ++l) acc[e][l] = T{};
    for (int i = 0; i < height; ++i) {
        const T* xrow = xp + (static_cast<size_t>(ic) * hp + i + d) * wp + e0;
        const T* grow = gT + static_cast<size_t>(i) * width * n_out + ob;
        for (int j = 0; j < width; ++j) {
            const T* g = grow + static_cast<size_t>(j) * n_out;
            for (int e = 0; e < KE; ++e) {
                const T xv = xrow[j + e];
                for (int l = 0; l < LEN; ++l) acc[e][l] += xv * g[l];
            }
        }
    }
    for (int e = 0; e < KE; ++e)
        for (int l = 0; l < LEN; ++l)
            dst[static_cast<size_t>(e0 + e) * n_out + l] += acc[e][l];
}

// Variable-length channel remainder of the weight-gradient reduction.
template <typename T>
void reduce_taps_var(const T* xp, int hp, int wp, int ic, int d, int e, const T* gT,
                     int height, int width, int n_out, int ob, int len, T* dst) {
    T acc[kChanBlock];
    for (int l = 0; l < len; ++l) acc[l] = T{};
    for (int i = 0; i < height; ++i) {
        const T* xrow = xp + (static_cast<size_t>(ic) * hp + i + d) * wp + e;
        const T* grow = gT + static_cast<size_t>(i) * width * n_out + ob;
        for (int j = 0; j < width; ++j) {
            const T xv = xrow[j];
            const T* g = grow + static_cast<size_t>(j) * n_out;
            for (int l = 0; l < len; ++l) acc[l] += xv * g[l];
        }
    }
    for (int l = 0; l < len; ++l) dst[static_cast<size_t>(e) * n_out + l] += acc[l];
}

// Full gathered pass: y(block, px) for every pixel, fast path on whole
// kChanBlock blocks and pixel quads, fallbacks on the remainders.
template <typename T>
void gather_pass(const T* xp, int hp, int wp, int height, int width, int n_in, int k,
                 const T* wt, int n_out, const T* bias, T* out_base, size_t cstride) {
    const int main_o = n_out - n_out % kChanBlock;
    const int main_j = width - width % kPixBlock;
    for (int i = 0; i < height; ++i) {
        for (int ob = 0; ob < main_o; ob += kChanBlock) {
            T* orow = out_base + static_cast<size_t>(ob) * cstride +
                      static_cast<size_t>(i) * width;
            const T* wb = wt + ob;
            const T* bb = bias ? bias + ob : nullptr;
            int j = 0;
            for (; j < main_j; j += kPixBlock)
                gather_block<T, kChanBlock, kPixBlock>(xp, hp, wp, i, j, n_in, k, wb,
                                                       n_out, bb, orow + j, cstride);
            for (; j < width; ++j)
                gather_block<T, kChanBlock, 1>(xp, hp, wp, i, j, n_in, k, wb, n_out,
                                               bb, orow + j, cstride);
        }
        if (main_o < n_out) {
            T* orow = out_base + static_cast<size_t>(main_o) * cstride +
                      static_cast<size_t>(i) * width;
            const T* bb = bias ? bias + main_o : nullptr;
            for (int j = 0; j < width; ++j)
                gather_var(xp, hp, wp, i, j, n_in, k, wt + main_o, n_out,
                           n_out - main_o, bb, orow + j, cstride);
        }
    }
}

}  // namespace conv_detail

// Same-padded cross-correlation; weights are (out_c, in_c, k, k), kernel odd.
// Inner loops run along a transposed weight layout [in_c][ky][kx][out_c] with
// per-pixel register accumulators over out_c blocks, so the hot loop is a
// broadcast-multiply-accumulate the compiler vectorises across channels.
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const Tensor4<T>& w,
                          const std::vector<T>& bias) {
    using conv_detail::kChanBlock;
    const int k = w.h, pad = k / 2;
    if (w.w != k || k % 2 == 0) throw ConfigError("conv2d: kernel must be odd square");
    if (w.c != x.c || static_cast<int>(bias.size()) != w.n)
        throw ConfigError("conv2d: shape mismatch");

    const int CI = x.c, CO = w.n, H = x.h, W = x.w, WP = W + 2 * pad;
    std::vector<T> wt(static_cast<size_t>(CI) * k * k * CO);
    for (int o = 0; o < CO; ++o)
        for (int ic = 0; ic < CI; ++ic)
            for (int d = 0; d < k; ++d)
                for (int e = 0; e < k; ++e)
                    wt[((static_cast<size_t>(ic) * k + d) * k + e) * CO + o] =
                        w.row(o, ic, d)[e];

    Tensor4<T> y(x.n, CO, H, W);
    std::vector<T> xp;
    for (int b = 0; b < x.n; ++b) {
        conv_detail::pad_sample(x, b, pad, xp);
        conv_detail::gather_pass(xp.data(), H + 2 * pad, WP, H, W, CI, k, wt.data(),
                                 CO, bias.data(), &y.at(b, 0, 0, 0),
                                 static_cast<size_t>(H) * W);
    }
    return y;
}

// Exact adjoints of conv2d_forward. dw/db are accumulated from zero here.
// dx uses the transposed-kernel identity (flip taps, swap channel roles); dw
// accumulates into an [in_c][ky][kx][out_c] buffer with the upstream gradient
// vector held across taps.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& w, const Tensor4<T>& dy,
                     Tensor4<T>& dx, Tensor4<T>& dw, std::vector<T>& db) {
    using conv_detail::kChanBlock;
    const int k = w.h, pad = k / 2;
    if (dy.n != x.n || dy.c != w.n || dy.h != x.h || dy.w != x.w)
        throw ConfigError("conv2d_backward: dy shape mismatch");

    const int CI = x.c, CO = w.n, H = x.h, W = x.w;
    const int HP = H + 2 * pad, WP = W + 2 * pad;
    dx = Tensor4<T>(x.n, CI, H, W);
    dw = Tensor4<T>(CO, CI, k, k);
    db.assign(CO, T{});

    // dx(u,v) = sum_{o,d,e} w(o,ic,k-1-d,k-1-e) dyp(u+d, v+e): forward shape
    // with flipped taps on the transposed layout [o][d][e][ic].
    std::vector<T> wflip(static_cast<size_t>(CO) * k * k * CI);
    for (int o = 0; o < CO; ++o)
        for (int ic = 0; ic < CI; ++ic)
            for (int d = 0; d < k; ++d)
                for (int e = 0; e < k; ++e)
                    wflip[((static_cast<size_t>(o) * k + d) * k + e) * CI + ic] =
                        w.row(o, ic, k - 1 - d)[k - 1 - e];

    std::vector<T> dwt(static_cast<size_t>(CI) * k * k * CO, T{});
    std::vector<T> buf, gT(static_cast<size_t>(H) * W * CO);
    const int main_o = CO - CO % kChanBlock;
    for (int b = 0; b < x.n; ++b) {
        conv_detail::pad_sample(dy, b, pad, buf);
        conv_detail::gather_pass(buf.data(), HP, WP, H, W, CO, k, wflip.data(), CI,
                                 static_cast<const T*>(nullptr), &dx.at(b, 0, 0, 0),
                                 static_cast<size_t>(H) * W);

        // dw(o,ic,d,e) += sum_{i,j} dy(o,i,j) xp(ic,i+d,j+e); db(o) += sum dy.
        for (int o = 0; o < CO; ++o) {
            const T* g = dy.row(b, o, 0);
            T s{};
            for (int j = 0; j < H * W; ++j) s += g[j];
            db[o] += s;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    gT[(static_cast<size_t>(i) * W + j) * CO + o] = dy.row(b, o, i)[j];
        }
        conv_detail::pad_sample(x, b, pad, buf);
        for (int ic = 0; ic < CI; ++ic)
            for (int d = 0; d < k; ++d) {
                T* drow = dwt.data() + (static_cast<size_t>(ic) * k + d) * k * CO;
                int ob = 0;
                for (; ob < main_o; ob += kChanBlock) {
                    if (k == 3)
                        conv_detail::reduce_taps<T, kChanBlock, 3>(
                            buf.data(), HP, WP, ic, d, 0, gT.data(), H, W, CO, ob,
                            drow + ob);
                    else
                        for (int e = 0; e < k; ++e)
                            conv_detail::reduce_taps<T, kChanBlock, 1>(
                                buf.data(), HP, WP, ic, d, e, gT.data(), H, W, CO,
                                ob, drow + ob);
                }
                if (ob < CO)
                    for (int e = 0; e < k; ++e)
                        conv_detail::reduce_taps_var(buf.data(), HP, WP, ic, d, e,
                                                     gT.data(), H, W, CO, ob,
                                                     CO - ob, drow + ob);
            }
    }
    for (int o = 0; o < CO; ++o)
        for (int ic = 0; ic < CI; ++ic)
            for (int d = 0; d < k; ++d)
                for (int e = 0; e < k; ++e)
                    dw.row(o, ic, d)[e] =
                        dwt[((static_cast<size_t>(ic) * k + d) * k + e) * CO + o];
}

template <typename T>
struct BnCache {
    std::vector<T> inv_std; // per channel
    Tensor4<T> xhat;
};

// Per-channel batch normalization. Training mode computes batch statistics
// (biased variance), updates running stats with factor kBnMomentum, and fills
// the cache; inference mode uses the running statistics.
template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, const std::vector<T>& gamma,
                             const std::vector<T>& beta, std::vector<T>& run_mean,
                             std::vector<T>& run_var, bool training,
                             BnCache<T>* cache) {
    const int C = x.c;
    if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C ||
        static_cast<int>(run_mean.size()) != C || static_cast<int>(run_var.size()) != C)
        throw ConfigError("batchnorm: channel count mismatch");

    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const std::int64_t per = static_cast<std::int64_t>(x.n) * x.h * x.w;

    if (training) {
        if (cache == nullptr) throw ConfigError("batchnorm: training mode needs a cache");
        cache->inv_std.assign(C, T{});
        cache->xhat = Tensor4<T>(x.n, x.c, x.h, x.w);
    }

    for (int ch = 0; ch < C; ++ch) {
        double mean, inv_std;
        if (training) {
            double s = 0.0;
            for (int b = 0; b < x.n; ++b) {
                const T* p = x.row(b, ch, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.h) * x.w; ++i)
                    s += p[i];
            }
            mean = s / per;
            double v = 0.0;
            for (int b = 0; b < x.n; ++b) {
                const T* p = x.row(b, ch, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.h) * x.w; ++i) {
                    const double d = p[i] - mean;
                    v += d * d;
                }
            }
            v /= per;
            inv_std = 1.0 / std::sqrt(v + kBnEps);
            run_mean[ch] = static_cast<T>((1.0 - kBnMomentum) * run_mean[ch] +
                                          kBnMomentum * mean);
            run_var[ch] =
                static_cast<T>((1.0 - kBnMomentum) * run_var[ch] + kBnMomentum * v);
            cache->inv_std[ch] = static_cast<T>(inv_std);
        } else {
            mean = run_mean[ch];
            inv_std = 1.0 / std::sqrt(static_cast<double>(run_var[ch]) + kBnEps);
        }
        const T g = gamma[ch], bta = beta[ch];
        for (int b = 0; b < x.n; ++b) {
            const T* p = x.row(b, ch, 0);
            T* q = y.row(b, ch, 0);
            T* xh = training ? cache->xhat.row(b, ch, 0) : nullptr;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.h) * x.w; ++i) {
                const T xn = static_cast<T>((p[i] - mean) * inv_std);
                if (training) xh[i] = xn;
                q[i] = g * xn + bta;
            }
        }
    }
    return y;
}

template <typename T>
void batchnorm_backward(const BnCache<T>& cache, const std::vector<T>& gamma,
                        const Tensor4<T>& dy, Tensor4<T>& dx, std::vector<T>& dgamma,
                        std::vector<T>& dbeta) {
    const Tensor4<T>& xh = cache.xhat;
    if (!dy.same_shape(xh)) throw ConfigError("batchnorm_backward: shape mismatch");
    const int C = xh.c;
    dx = Tensor4<T>(xh.n, xh.c, xh.h, xh.w);
    dgamma.assign(C, T{});
    dbeta.assign(C, T{});
    const std::int64_t per = static_cast<std::int64_t>(xh.n) * xh.h * xh.w;
    const std::int64_t hw = static_cast<std::int64_t>(xh.h) * xh.w;

    for (int ch = 0; ch < C; ++ch) {
        double sg = 0.0, sb = 0.0;
        for (int b = 0; b < xh.n; ++b) {
            const T* g = dy.row(b, ch, 0);
            const T* x = xh.row(b, ch, 0);
            for (std::int64_t i = 0; i < hw; ++i) {
                sg += static_cast<double>(g[i]) * x[i];
                sb += g[i];
            }
        }
        dgamma[ch] = static_cast<T>(sg);
        dbeta[ch] = static_cast<T>(sb);
        const double scale = static_cast<double>(gamma[ch]) * cache.inv_std[ch];
        for (int b = 0; b < xh.n; ++b) {
            const T* g = dy.row(b, ch, 0);
            const T* x = xh.row(b, ch, 0);
            T* d = dx.row(b, ch, 0);
            for (std::int64_t i = 0; i < hw; ++i)
                d[i] = static_cast<T>(scale * (g[i] - sb / per - x[i] * sg / per));
        }
    }
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    for (std::int64_t i = 0; i < x.size(); ++i) y.data[i] = std::max(x.data[i], T{});
    return y;
}

// Mask from the saved pre-activation.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
    if (!dy.same_shape(x)) throw ConfigError("relu_backward: shape mismatch");
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    for (std::int64_t i = 0; i < x.size(); ++i)
        dx.data[i] = x.data[i] > T{} ? dy.data[i] : T{};
    return dx;
}

// Classical momentum: v <- mu v - lr (g + wd w); w <- w + v.
template <typename T>
void sgd_update(std::vector<T>& w, std::vector<T>& v, const std::vector<T>& g,
                double lr, double momentum, double weight_decay) {
    if (w.size() != v.size() || w.size() != g.size())
        throw ConfigError("sgd_update: size mismatch");
    for (size_t i = 0; i < w.size(); ++i) {
        v[i] = static_cast<T>(momentum * v[i] - lr * (g[i] + weight_decay * w[i]));
        w[i] += v[i];
    }
}

// Piecewise-constant schedule: the rate of the last entry at or before iter.
inline double lr_at(const std::vector<std::pair<int, double>>& schedule, int iter) {
    if (schedule.empty()) throw ConfigError("lr schedule is empty");
    double lr = schedule.front().second;
    for (const auto& [it, rate] : schedule)
        if (it <= iter) lr = rate;
    return lr;
}

// (1/N) sum_i ||pred_i - target_i||_F^2 over the batch; grad = 2(pred-target)/N.
template <typename T>
double mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target, Tensor4<T>& grad) {
    if (!pred.same_shape(target)) throw ConfigError("mse_loss: shape mismatch");
    grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);
    double loss = 0.0;
    const double inv_n = 1.0 / pred.n;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - target.data[i];
        loss += d * d;
        grad.data[i] = static_cast<T>(2.0 * d * inv_n);
    }
    return loss * inv_n;
}

} // namespace oled
