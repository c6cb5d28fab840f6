#include "oled/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "oled/guided_filter.hpp"
#include "oled/imageops.hpp"

namespace oled {

namespace {

constexpr int kGuidedRadius = 15;
constexpr double kGuidedEps = 1e-4;
constexpr int kValEvery = 200;
// Sub-stream indices under the training seed.
constexpr std::uint64_t kNetInitStream = 1;
constexpr std::uint64_t kSamplerStream = 2;

Tensor4<float> to_input(const ComplexImage& img) {
    const int rows = img.grid.rows, cols = img.grid.cols;
    const double m = max_abs(img);
    const double scale = m > 0.0 ? 1.0 / m : 0.0;
    Tensor4<float> t(1, 2, rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            t.at(0, 0, r, c) = static_cast<float>(img.data(r, c).real() * scale);
            t.at(0, 1, r, c) = static_cast<float>(img.data(r, c).imag() * scale);
        }
    return t;
}

Tensor4<float> to_target(const RealRaster& t2, double t2_scale_ms) {
    Tensor4<float> t(1, 1, t2.rows(), t2.cols());
    for (std::int64_t i = 0; i < t2.size(); ++i)
        t.data[i] = static_cast<float>(t2[i] / t2_scale_ms);
    return t;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void clip_range(std::vector<float>& g, float lim) {
    for (float& v : g) v = std::clamp(v, -lim, lim);
}

// Element-wise adjustable clipping: limit every gradient entry to +/- theta/lr
// so the per-step parameter motion is bounded by theta.
void clip_gradients(ResNet<float>& net, double theta, double lr) {
    if (theta <= 0.0) return;
    const float lim = static_cast<float>(theta / lr);
    for (auto& c : net.convs()) {
        for (float& v : c.dw.data) v = std::clamp(v, -lim, lim);
        clip_range(c.db, lim);
    }
    for (auto& bn : net.bns()) {
        clip_range(bn.dgamma, lim);
        clip_range(bn.dbeta, lim);
    }
}

} // namespace

void TrainConfig::require_valid() const {
    if (lr_schedule.empty()) throw ConfigError("TrainConfig: empty lr schedule");
    for (size_t i = 1; i < lr_schedule.size(); ++i)
        if (lr_schedule[i].first <= lr_schedule[i - 1].first)
            throw ConfigError("TrainConfig: schedule iterations must strictly increase");
    if (batch < 1 || max_iters < 1 || patch < 1 || momentum < 0.0 || momentum >= 1.0 ||
        weight_decay < 0.0 || t2_scale_ms <= 0.0 || clip_theta < 0.0)
        throw ConfigError("invalid TrainConfig");
}

std::pair<Tensor4<float>, Tensor4<float>> sample_patches(
    const std::vector<TrainSample>& dataset, int patch, int batch, rng::Stream& rs,
    double t2_scale_ms) {
    if (dataset.empty()) throw ConfigError("sample_patches: empty dataset");
    if (patch < 1 || batch < 1) throw ConfigError("sample_patches: bad patch/batch");

    Tensor4<float> x(batch, 2, patch, patch);
    Tensor4<float> y(batch, 1, patch, patch);
    for (int b = 0; b < batch; ++b) {
        const auto idx = static_cast<size_t>(
            rs.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1));
        const TrainSample& s = dataset[idx];
        const int rows = s.input.grid.rows, cols = s.input.grid.cols;
        if (rows < patch || cols < patch)
            throw ConfigError("sample_patches: patch larger than image");
        const int r0 = static_cast<int>(rs.uniform_int(0, rows - patch));
        const int c0 = static_cast<int>(rs.uniform_int(0, cols - patch));

        const double m = max_abs(s.input);
        const double scale = m > 0.0 ? 1.0 / m : 0.0;
        for (int r = 0; r < patch; ++r)
            for (int c = 0; c < patch; ++c) {
                const auto v = s.input.data(r0 + r, c0 + c);
                x.at(b, 0, r, c) = static_cast<float>(v.real() * scale);
                x.at(b, 1, r, c) = static_cast<float>(v.imag() * scale);
                y.at(b, 0, r, c) =
                    static_cast<float>(s.t2_ms(r0 + r, c0 + c) / t2_scale_ms);
            }
    }
    return {std::move(x), std::move(y)};
}

double validation_loss(ResNet<float>& net, const std::vector<TrainSample>& samples) {
    if (samples.empty()) throw ConfigError("validation_loss: empty sample set");
    double total = 0.0;
    for (const TrainSample& s : samples) {
        Tensor4<float> pred = net.forward(to_input(s.input), false);
        Tensor4<float> grad;
        total += mse_loss(pred, to_target(s.t2_ms, net.t2_scale_ms()), grad);
    }
    return total / static_cast<double>(samples.size());
}

ResNet<float> train(const std::vector<TrainSample>& train_set,
                    const std::vector<TrainSample>& val_set,
                    const NetworkConfig& net_cfg, const TrainConfig& tc,
                    const std::string& log_csv, const std::string& ckpt_dir) {
    net_cfg.require_valid();
    tc.require_valid();
    if (train_set.empty()) throw ConfigError("train: empty training set");

    ResNet<float> net(net_cfg, rng::derive(tc.seed, kNetInitStream));
    net.set_t2_scale_ms(tc.t2_scale_ms);
    rng::Stream sampler(rng::derive(tc.seed, kSamplerStream));

    std::ofstream log;
    if (!log_csv.empty()) {
        log.open(log_csv, std::ios::trunc);
        if (!log) throw IoError("train: cannot open log: " + log_csv);
        log << "iteration,lr,train_loss,val_loss\n";
    }

    double last_loss = 0.0;
    for (int i = 0; i < tc.max_iters; ++i) {
        auto [x, y] = sample_patches(train_set, tc.patch, tc.batch, sampler,
                                     tc.t2_scale_ms);
        Tensor4<float> pred = net.forward(x, true);
        Tensor4<float> grad;
        const double loss = mse_loss(pred, y, grad);
        if (!std::isfinite(loss)) {
            net.set_train_loss(loss);
            net.set_rng_digest(sampler.state_digest());
            if (!ckpt_dir.empty()) net.save(ckpt_dir + "/diverged.olnc");
            throw NumericError("train: loss diverged at iteration " +
                               std::to_string(i + 1));
        }
        net.backward(grad);
        const double lr = lr_at(tc.lr_schedule, i);
        clip_gradients(net, tc.clip_theta, lr);
        net.apply_sgd(lr, tc.momentum, tc.weight_decay);
        last_loss = loss;

        const int done = i + 1;
        const bool val_now =
            !val_set.empty() && (done == 1 || done % kValEvery == 0 || done == tc.max_iters);
        double vloss = 0.0;
        if (val_now) vloss = validation_loss(net, val_set);
        if (log)
            log << done << ',' << fmt(lr_at(tc.lr_schedule, i)) << ',' << fmt(loss)
                << ',' << (val_now ? fmt(vloss) : "") << '\n';

        if (!ckpt_dir.empty())
            for (const auto& [boundary, rate] : tc.lr_schedule)
                if (boundary == done) {
                    net.set_train_loss(loss);
                    net.set_rng_digest(sampler.state_digest());
                    net.save(ckpt_dir + "/ckpt_" + std::to_string(done) + ".olnc");
                }
    }

    net.set_train_loss(last_loss);
    net.set_rng_digest(sampler.state_digest());
    if (!ckpt_dir.empty()) net.save(ckpt_dir + "/final.olnc");
    return net;
}

RealRaster infer_t2(const ComplexImage& img, ResNet<float>& net,
                    bool use_guided_filter) {
    Tensor4<float> y = net.forward(to_input(img), false);
    RealRaster out(img.grid.rows, img.grid.cols);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = y.data[i];
    if (use_guided_filter) out = guided_filter(out, out, kGuidedRadius, kGuidedEps);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= net.t2_scale_ms();
    return out;
}

} // namespace oled
