#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oled/grid.hpp"
#include "oled/resnet.hpp"
#include "oled/rng.hpp"

namespace oled {

struct TrainConfig {
    std::vector<std::pair<int, double>> lr_schedule{{0, 0.1}, {32000, 0.01}, {64000, 0.001}};
    double momentum = 0.9;
    double weight_decay = 1e-8;
    int batch = 16;
    int max_iters = 100000;
    int patch = 64;
    std::uint64_t seed = 0;
    double t2_scale_ms = 500.0;
    // Adjustable element-wise gradient clipping: each gradient entry is limited
    // to +/- clip_theta/lr before the update, so no parameter moves more than
    // clip_theta per step regardless of the rate. The batch-normalised final
    // layer otherwise makes the loss curvature scale with patch area and the
    // high initial rate diverges. 0 disables clipping.
    double clip_theta = 0.01;
    // Dataset-synthesis companions (consumed by the generation pipeline).
    double noise_snr_db = 115.3;
    double jitter_frac = 0.05;

    void require_valid() const;
};

// One training example: double-echo-removed complex image and its T2 truth.
struct TrainSample {
    ComplexImage input;
    RealRaster t2_ms;
};

// Random crop batch. Input channels are (re, im) of the image, scaled by that
// image's max magnitude; the target is the T2 crop divided by t2_scale_ms.
std::pair<Tensor4<float>, Tensor4<float>> sample_patches(
    const std::vector<TrainSample>& dataset, int patch, int batch, rng::Stream& rs,
    double t2_scale_ms);

// Mean full-image MSE over a sample set, inference-mode network.
double validation_loss(ResNet<float>& net, const std::vector<TrainSample>& samples);

// The SGD loop: sample -> forward -> loss -> backward -> step. Appends CSV
// rows "iteration,lr,train_loss,val_loss" to log_csv when non-empty; writes
// checkpoints at learning-rate boundaries and at termination into ckpt_dir
// when non-empty. A NaN loss aborts with a diagnostic checkpoint.
ResNet<float> train(const std::vector<TrainSample>& train_set,
                    const std::vector<TrainSample>& val_set,
                    const NetworkConfig& net_cfg, const TrainConfig& tc,
                    const std::string& log_csv = {}, const std::string& ckpt_dir = {});

// Full-image forward pass (the network is size-agnostic), times t2_scale_ms,
// optionally self-guided-filtered (radius 15, eps 1e-4, applied before the
// millisecond rescale).
RealRaster infer_t2(const ComplexImage& img, ResNet<float>& net, bool use_guided_filter);

} // namespace oled
