#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "oled/layers.hpp"
#include "oled/rng.hpp"
#include "oled/tensor.hpp"

namespace oled {

// Layer-count L must be even: layer 1 in, (L-2)/2 two-conv residual units,
// layer L out. Input is the two-channel (re, im) image, output one channel.
struct NetworkConfig {
    int n_param_layers = 8;
    int filters = 64;
    int kernel = 3;
    int in_channels = 2;
    int out_channels = 1;

    int units() const { return (n_param_layers - 2) / 2; }
    void require_valid() const {
        if (n_param_layers < 4 || n_param_layers % 2 != 0 || filters < 1 ||
            kernel < 1 || kernel % 2 == 0 || in_channels != 2 || out_channels != 1)
            throw ConfigError("invalid NetworkConfig");
    }
};

// The residual regression network:
//   X^1     = relu(BN(conv_1(X^0)))
//   X^{2l}  = relu(BN(conv_{2l}(X^{2l-1})))
//   X^{2l+1}= relu(BN(conv_{2l+1}(X^{2l}))) + X^{2l-1}   l = 1..(L-2)/2
//   Y       = BN(conv_L(X^{L-1}))
// The skip joins after the second activation of each unit; the final layer
// has batch norm but no activation and no skip.
template <typename T>
class ResNet {
public:
    struct Conv {
        Tensor4<T> w, dw, vw;
        std::vector<T> b, db, vb;
    };
    struct Bn {
        std::vector<T> gamma, beta, run_mean, run_var;
        std::vector<T> dgamma, dbeta, vgamma, vbeta;
        BnCache<T> cache;
    };

    ResNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.require_valid();
        rng::Stream rs(seed);
        const int L = cfg_.n_param_layers;
        for (int l = 0; l < L; ++l) {
            const int in_c = l == 0 ? cfg_.in_channels : cfg_.filters;
            const int out_c = l == L - 1 ? cfg_.out_channels : cfg_.filters;
            Conv cv;
            cv.w = Tensor4<T>(out_c, in_c, cfg_.kernel, cfg_.kernel);
            const double std_dev = std::sqrt(2.0 / (in_c * cfg_.kernel * cfg_.kernel));
            for (auto& v : cv.w.data) v = static_cast<T>(rs.gaussian() * std_dev);
            cv.vw = Tensor4<T>(out_c, in_c, cfg_.kernel, cfg_.kernel);
            cv.b.assign(out_c, T{});
            cv.vb.assign(out_c, T{});
            convs_.push_back(std::move(cv));

            Bn bn;
            bn.gamma.assign(out_c, T{1});
            bn.beta.assign(out_c, T{});
            bn.run_mean.assign(out_c, T{});
            bn.run_var.assign(out_c, T{1});
            bn.vgamma.assign(out_c, T{});
            bn.vbeta.assign(out_c, T{});
            bns_.push_back(std::move(bn));
        }
        rng_digest_ = rs.state_digest();
        conv_in_.resize(L);
        relu_in_.resize(L - 1);
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool training) {
        cfg_.require_valid();
        if (x.c != cfg_.in_channels)
            throw ConfigError("resnet: input must have 2 channels (re, im)");
        if (x.h < cfg_.kernel || x.w < cfg_.kernel)
            throw ConfigError("resnet: input smaller than the kernel");
        if (!training && iteration_ == 0)
            throw ConfigError("resnet: inference before any training step "
                              "(running statistics uninitialized)");
        const int L = cfg_.n_param_layers;

        Tensor4<T> cur = layer_block(x, 0, training);
        for (int u = 0; u < cfg_.units(); ++u) {
            Tensor4<T> h = layer_block(cur, 2 * u + 1, training);
            Tensor4<T> h2 = layer_block(h, 2 * u + 2, training);
            for (std::int64_t i = 0; i < h2.size(); ++i) h2.data[i] += cur.data[i];
            cur = std::move(h2);
        }
        if (training) conv_in_[L - 1] = cur;
        Tensor4<T> y = conv2d_forward(cur, convs_[L - 1].w, convs_[L - 1].b);
        return batchnorm_forward(y, bns_[L - 1].gamma, bns_[L - 1].beta,
                                 bns_[L - 1].run_mean, bns_[L - 1].run_var, training,
                                 training ? &bns_[L - 1].cache : nullptr);
    }

    // Gradients of the last training-mode forward; returns d(loss)/d(input).
    Tensor4<T> backward(const Tensor4<T>& dloss) {
        const int L = cfg_.n_param_layers;
        Tensor4<T> d = block_backward_tail(dloss, L - 1);
        for (int u = cfg_.units() - 1; u >= 0; --u) {
            Tensor4<T> d_skip = d;
            Tensor4<T> dh = block_backward(d, 2 * u + 2);
            d = block_backward(dh, 2 * u + 1);
            for (std::int64_t i = 0; i < d.size(); ++i) d.data[i] += d_skip.data[i];
        }
        return block_backward(d, 0);
    }

    void apply_sgd(double lr, double momentum, double weight_decay) {
        for (auto& cv : convs_) {
            sgd_update(cv.w.data, cv.vw.data, cv.dw.data, lr, momentum, weight_decay);
            sgd_update(cv.b, cv.vb, cv.db, lr, momentum, weight_decay);
        }
        for (auto& bn : bns_) {
            sgd_update(bn.gamma, bn.vgamma, bn.dgamma, lr, momentum, weight_decay);
            sgd_update(bn.beta, bn.vbeta, bn.dbeta, lr, momentum, weight_decay);
        }
        ++iteration_;
    }

    const NetworkConfig& config() const { return cfg_; }
    std::int64_t iteration() const { return iteration_; }
    std::uint64_t rng_digest() const { return rng_digest_; }
    void set_rng_digest(std::uint64_t d) { rng_digest_ = d; }
    double t2_scale_ms() const { return t2_scale_ms_; }
    void set_t2_scale_ms(double v) { t2_scale_ms_ = v; }
    double train_loss() const { return train_loss_; }
    void set_train_loss(double v) { train_loss_ = v; }

    std::vector<Conv>& convs() { return convs_; }
    std::vector<Bn>& bns() { return bns_; }
    const std::vector<Conv>& convs() const { return convs_; }
    const std::vector<Bn>& bns() const { return bns_; }

    void save(const std::string& path) const;
    static ResNet load(const std::string& path);

private:
    struct Uninit {};
    explicit ResNet(Uninit) {}

    Tensor4<T> layer_block(const Tensor4<T>& x, int l, bool training) {
        if (training) conv_in_[l] = x;
        Tensor4<T> y = conv2d_forward(x, convs_[l].w, convs_[l].b);
        y = batchnorm_forward(y, bns_[l].gamma, bns_[l].beta, bns_[l].run_mean,
                              bns_[l].run_var, training,
                              training ? &bns_[l].cache : nullptr);
        if (training) relu_in_[l] = y;
        return relu_forward(y);
    }

    Tensor4<T> block_backward(const Tensor4<T>& d, int l) {
        return block_backward_tail(relu_backward(relu_in_[l], d), l);
    }

    // conv+bn backward without the relu (the final layer has none).
    Tensor4<T> block_backward_tail(const Tensor4<T>& d, int l) {
        Tensor4<T> dbn;
        batchnorm_backward(bns_[l].cache, bns_[l].gamma, d, dbn, bns_[l].dgamma,
                           bns_[l].dbeta);
        Tensor4<T> dx;
        conv2d_backward(conv_in_[l], convs_[l].w, dbn, dx, convs_[l].dw, convs_[l].db);
        return dx;
    }

    NetworkConfig cfg_;
    std::vector<Conv> convs_;
    std::vector<Bn> bns_;
    std::vector<Tensor4<T>> conv_in_;
    std::vector<Tensor4<T>> relu_in_;
    std::int64_t iteration_ = 0;
    std::uint64_t rng_digest_ = 0;
    double t2_scale_ms_ = 500.0;
    double train_loss_ = std::numeric_limits<double>::quiet_NaN();
};

} // namespace oled
