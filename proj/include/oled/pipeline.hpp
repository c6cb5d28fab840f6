#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <oled/detach.hpp>
#include <oled/evalrep.hpp>
#include <oled/io.hpp>
#include <oled/phantom.hpp>
#include <oled/train.hpp>

namespace oled {

enum class PhantomKind { random, brain };

struct GenDatasetConfig {
    std::string out_dir;
    int count = 100;
    int train_count = 90;  // the rest is the held-out split
    int rows = 128, cols = 128;
    double fov_x_cm = 22.0, fov_y_cm = 22.0;
    int supersample = 2;   // phantom rasterised at rows*s x cols*s, then averaged
    PhantomKind phantom = PhantomKind::random;
    RandomTemplateSpec phantom_spec;  // seed field is ignored (derived per sample)
    SequenceParams params;            // nominal sequence
    double shift_scale = 1.0;         // deterministic gradient-amplitude deviation
    double jitter_frac = 0.0;         // per-sample uniform +-frac on shift components
    double snr_db = 115.3;
    std::uint64_t seed = 0;

    void require_valid() const;
};

// Per sample i (seed s_i = derive(seed, i)): phantom from derive(s_i, 1),
// shift jitter from derive(s_i, 2), noise from derive(s_i, 3); pipeline is
// phantom -> forward -> noise -> double-echo removal, written as an OIMG pair.
// Split membership is a seeded shuffle of the sample indices. Returns the
// manifest that was written to <out_dir>/manifest.json.
DatasetManifest gen_dataset(const GenDatasetConfig& cfg);

struct LoadedDataset {
    std::vector<TrainSample> train;
    std::vector<TrainSample> test;
    std::vector<SampleRecord> train_records;
    std::vector<SampleRecord> test_records;
};

LoadedDataset load_dataset(const std::string& manifest_path);

// Median wall time of `runs` calls after `warmup` unrecorded calls.
template <typename Fn>
std::pair<double, std::vector<double>> median_wall_ms(Fn&& fn, int runs, int warmup) {
    std::vector<double> times;
    for (int i = 0; i < warmup + runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        if (i >= warmup)
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const double med = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return {med, times};
}

struct ReconstructResult {
    RealRaster t2_ms;
    MaskRaster mask;
    double wall_ms_median = 0.0;
    std::vector<double> wall_ms_runs;
    bool converged = true;  // detach only; network runs always "converge"
    int iterations = 0;
    std::string method;
};

ReconstructResult reconstruct_detach(const ComplexImage& input,
                                     const SequenceParams& params,
                                     const DetachParams& dp, int timing_runs = 5,
                                     int warmup = 1);

ReconstructResult reconstruct_network(const ComplexImage& input, ResNet<float>& net,
                                      bool use_guided_filter, int timing_runs = 5,
                                      int warmup = 1);

// Config-section loaders (flat key-value files; see configs/).
GenDatasetConfig gen_config_from(const Config& cfg);
SequenceParams sequence_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);
NetworkConfig network_config_from(const Config& cfg);
DetachParams detach_params_from(const Config& cfg);

// ROI list from [eval] keys roi_1..roi_N = [id, x, y, radius] authored for a
// square eval.ref_grid raster, rescaled to rows x cols.
std::vector<RoiSpec> load_rois(const Config& cfg, int rows, int cols);

// Manifest-driven training; writes training.csv and checkpoints to out_dir.
ResNet<float> run_training(const std::string& manifest_path,
                           const NetworkConfig& net_cfg, const TrainConfig& tc,
                           const std::string& out_dir);

// The standard evaluation scene: brain phantom acquired at cfg's grid/SNR with
// the nominal shifts scaled by shift_scale (gradient-amplitude deviation),
// double echo removed with the same (known) deviated sequence. mask = truth
// support. cfg.phantom/jitter settings are ignored.
struct BrainEvalImage {
    ComplexImage input;
    RealRaster ref_t2_ms;
    MaskRaster mask;
};

BrainEvalImage brain_eval_image(const GenDatasetConfig& cfg, double shift_scale,
                                std::uint64_t noise_seed);

struct SweepCell {
    std::string cell_id;
    bool ok = false;
    std::string error;          // set when !ok
    double median_rel_err = 0.0;
    int worst_roi_id = -1;
    double worst_dev_ms = 0.0;
    double worst_dev_pct = 0.0;
    std::vector<RoiStat> stats;
};

// Trains one model per depth on the dataset named by the config and evaluates
// each on a brain-phantom test image; one cell per depth.
std::vector<SweepCell> sweep_depth(const Config& cfg, const std::string& out_dir);

// Trains "single" (jitter 0) and "multiple" (jittered) models and evaluates
// each under deterministic gradient-amplitude deviations; one cell per
// (mode, deviation). Cell ids look like "multiple/dev10".
std::vector<SweepCell> sweep_robustness(const Config& cfg, const std::string& out_dir);

void write_sweep_csv(const std::string& path, const std::vector<SweepCell>& cells);

}  // namespace oled
