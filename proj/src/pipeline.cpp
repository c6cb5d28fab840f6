#include <oled/pipeline.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <oled/errors.hpp>
#include <oled/kspace.hpp>
#include <oled/rng.hpp>

namespace fs = std::filesystem;

namespace oled {

namespace {

constexpr std::uint64_t kSplitStream = 1000003;

std::string sample_name(int i, const char* kind) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "sample_%04d_%s.oimg", i, kind);
    return buf;
}

SequenceParams scaled_shifts(SequenceParams p, double scale) {
    for (auto* s : {&p.shift1_cyc, &p.shift2_cyc, &p.shift3_cyc}) {
        (*s)[0] *= scale;
        (*s)[1] *= scale;
    }
    return p;
}

TissueMap make_phantom(const GenDatasetConfig& cfg, const GridSpec& acq,
                       std::uint64_t phantom_seed) {
    GridSpec model{acq.rows * cfg.supersample, acq.cols * cfg.supersample,
                   acq.fov_x_cm, acq.fov_y_cm};
    TissueMap map = cfg.phantom == PhantomKind::brain
                        ? make_brain_phantom(model)
                        : [&] {
                              RandomTemplateSpec spec = cfg.phantom_spec;
                              spec.seed = phantom_seed;
                              return make_random_phantom(spec, model);
                          }();
    return cfg.supersample == 1 ? std::move(map) : downsample(map, acq);
}

}  // namespace

void GenDatasetConfig::require_valid() const {
    if (out_dir.empty()) throw ConfigError("gen_dataset: out_dir is empty");
    if (count < 1) throw ConfigError("gen_dataset: count must be >= 1");
    if (train_count < 0 || train_count > count)
        throw ConfigError("gen_dataset: train_count out of range");
    if (supersample < 1) throw ConfigError("gen_dataset: supersample must be >= 1");
    if (!(shift_scale > 0.0)) throw ConfigError("gen_dataset: shift_scale must be > 0");
    if (!(jitter_frac >= 0.0 && jitter_frac < 1.0))
        throw ConfigError("gen_dataset: jitter_frac must be in [0, 1)");
    GridSpec{rows, cols, fov_x_cm, fov_y_cm}.require_valid();
    RandomTemplateSpec spec = phantom_spec;
    spec.require_valid();
    params.require_valid();
}

DatasetManifest gen_dataset(const GenDatasetConfig& cfg) {
    cfg.require_valid();
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec || !fs::is_directory(cfg.out_dir))
        throw IoError("gen_dataset: cannot create output dir: " + cfg.out_dir);

    const GridSpec acq{cfg.rows, cfg.cols, cfg.fov_x_cm, cfg.fov_y_cm};
    const SequenceParams nominal = scaled_shifts(cfg.params, cfg.shift_scale);

    // Seeded shuffle decides split membership.
    std::vector<int> order(cfg.count);
    for (int i = 0; i < cfg.count; ++i) order[i] = i;
    rng::Stream split_rs(rng::derive(cfg.seed, kSplitStream));
    for (int i = cfg.count - 1; i > 0; --i) {
        const int j = static_cast<int>(split_rs.uniform_int(0, i));
        std::swap(order[i], order[j]);
    }
    std::vector<std::string> split(cfg.count);
    for (int k = 0; k < cfg.count; ++k)
        split[order[k]] = k < cfg.train_count ? "train" : "test";

    DatasetManifest manifest;
    for (int i = 0; i < cfg.count; ++i) {
        const std::uint64_t s_i = rng::derive(cfg.seed, static_cast<std::uint64_t>(i));
        const TissueMap map = make_phantom(cfg, acq, rng::derive(s_i, 1));

        SequenceParams p = nominal;
        if (cfg.jitter_frac > 0.0) {
            rng::Stream jit(rng::derive(s_i, 2));
            for (auto* s : {&p.shift1_cyc, &p.shift2_cyc, &p.shift3_cyc})
                for (int k = 0; k < 2; ++k)
                    (*s)[k] *= 1.0 + jit.uniform(-cfg.jitter_frac, cfg.jitter_frac);
            p.require_valid();
        }

        const ComplexImage clean = forward_oled(map, p);
        const ComplexImage noisy = add_noise(clean, cfg.snr_db, rng::derive(s_i, 3));
        const RemoveDoubleEchoResult removed = remove_double_echo(noisy, p);

        nlohmann::json meta{{"kind", "oled"},
                            {"seed", s_i},
                            {"snr_db", cfg.snr_db},
                            {"jitter_applied", cfg.jitter_frac > 0.0},
                            {"proximity_warning", removed.proximity_warning},
                            {"params", sequence_params_to_json(p)}};
        const std::string oled_name = sample_name(i, "oled");
        const std::string t2_name = sample_name(i, "t2");
        write_oimg((fs::path(cfg.out_dir) / oled_name).string(), removed.image, meta);
        write_oimg((fs::path(cfg.out_dir) / t2_name).string(), map.t2_ms, acq,
                   {{"kind", "t2_ms"}, {"seed", s_i}});

        SampleRecord rec;
        rec.oled_path = oled_name;
        rec.t2_path = t2_name;
        rec.seed = s_i;
        rec.params = p;
        rec.jitter_applied = cfg.jitter_frac > 0.0;
        rec.split = split[i];
        manifest.records.push_back(std::move(rec));
    }
    write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), manifest);
    return manifest;
}

LoadedDataset load_dataset(const std::string& manifest_path) {
    const DatasetManifest m = read_manifest(manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    LoadedDataset out;
    for (const auto& rec : m.records) {
        TrainSample s;
        s.input = read_oimg_complex((dir / rec.oled_path).string());
        s.t2_ms = read_oimg_real((dir / rec.t2_path).string());
        if (rec.split == "train") {
            out.train.push_back(std::move(s));
            out.train_records.push_back(rec);
        } else if (rec.split == "test") {
            out.test.push_back(std::move(s));
            out.test_records.push_back(rec);
        } else {
            throw ConfigError("load_dataset: unknown split '" + rec.split + "'");
        }
    }
    return out;
}

ReconstructResult reconstruct_detach(const ComplexImage& input,
                                     const SequenceParams& params,
                                     const DetachParams& dp, int timing_runs,
                                     int warmup) {
    if (timing_runs < 1) throw ConfigError("reconstruct: timing_runs must be >= 1");
    ReconstructResult out;
    out.method = "detach";
    DetachResult last;
    auto [med, runs] = median_wall_ms(
        [&] { last = detach_echoes(input, params, dp); }, timing_runs, warmup);
    out.wall_ms_median = med;
    out.wall_ms_runs = std::move(runs);
    out.t2_ms = std::move(last.t2_ms);
    out.mask = std::move(last.mask);
    out.converged = last.converged;
    out.iterations = static_cast<int>(last.objective_trace.empty()
                                          ? 0
                                          : last.objective_trace.size() - 1);
    return out;
}

ReconstructResult reconstruct_network(const ComplexImage& input, ResNet<float>& net,
                                      bool use_guided_filter, int timing_runs,
                                      int warmup) {
    if (timing_runs < 1) throw ConfigError("reconstruct: timing_runs must be >= 1");
    ReconstructResult out;
    out.method = "network";
    RealRaster t2;
    auto [med, runs] = median_wall_ms(
        [&] { t2 = infer_t2(input, net, use_guided_filter); }, timing_runs, warmup);
    out.wall_ms_median = med;
    out.wall_ms_runs = std::move(runs);
    out.mask = MaskRaster(t2.rows(), t2.cols());
    std::fill(out.mask.begin(), out.mask.end(), 1);
    out.t2_ms = std::move(t2);
    out.converged = true;
    out.iterations = 0;
    return out;
}

SequenceParams sequence_from(const Config& cfg) {
    SequenceParams p;
    p.alpha_deg = cfg.get_double("sequence.alpha_deg", p.alpha_deg);
    p.beta_deg = cfg.get_double("sequence.beta_deg", p.beta_deg);
    p.te1_ms = cfg.get_double("sequence.te1_ms", p.te1_ms);
    p.te2_ms = cfg.get_double("sequence.te2_ms", p.te2_ms);
    const auto shift = [&](const char* key, std::array<double, 2>& dst) {
        if (!cfg.has(key)) return;
        const auto v = cfg.get_double_array(key);
        if (v.size() != 2)
            throw ConfigError(std::string("config: ") + key + " must be [x, y]");
        dst = {v[0], v[1]};
    };
    shift("sequence.shift1", p.shift1_cyc);
    shift("sequence.shift2", p.shift2_cyc);
    shift("sequence.shift3", p.shift3_cyc);
    p.require_valid();
    return p;
}

GenDatasetConfig gen_config_from(const Config& cfg) {
    GenDatasetConfig g;
    g.out_dir = cfg.get_string("dataset.out_dir", "");
    g.count = static_cast<int>(cfg.get_int("dataset.count", g.count));
    g.train_count = static_cast<int>(cfg.get_int("dataset.train_count", g.train_count));
    g.rows = static_cast<int>(cfg.get_int("dataset.rows", g.rows));
    g.cols = static_cast<int>(cfg.get_int("dataset.cols", g.cols));
    g.fov_x_cm = cfg.get_double("dataset.fov_x_cm", g.fov_x_cm);
    g.fov_y_cm = cfg.get_double("dataset.fov_y_cm", g.fov_y_cm);
    g.supersample = static_cast<int>(cfg.get_int("dataset.supersample", g.supersample));
    g.shift_scale = cfg.get_double("dataset.shift_scale", g.shift_scale);
    g.jitter_frac = cfg.get_double("dataset.jitter_frac", g.jitter_frac);
    g.snr_db = cfg.get_double("dataset.snr_db", g.snr_db);
    g.seed = static_cast<std::uint64_t>(cfg.get_int("dataset.seed", 0));
    const std::string kind = cfg.get_string("dataset.phantom", "random");
    if (kind == "random")
        g.phantom = PhantomKind::random;
    else if (kind == "brain")
        g.phantom = PhantomKind::brain;
    else
        throw ConfigError("config: dataset.phantom must be random or brain");
    auto& ps = g.phantom_spec;
    ps.n_shapes_min = static_cast<int>(cfg.get_int("phantom.n_shapes_min", ps.n_shapes_min));
    ps.n_shapes_max = static_cast<int>(cfg.get_int("phantom.n_shapes_max", ps.n_shapes_max));
    ps.t2_range_ms[0] = cfg.get_double("phantom.t2_min_ms", ps.t2_range_ms[0]);
    ps.t2_range_ms[1] = cfg.get_double("phantom.t2_max_ms", ps.t2_range_ms[1]);
    ps.csf_t2_range_ms[0] = cfg.get_double("phantom.csf_t2_min_ms", ps.csf_t2_range_ms[0]);
    ps.csf_t2_range_ms[1] = cfg.get_double("phantom.csf_t2_max_ms", ps.csf_t2_range_ms[1]);
    ps.csf_fraction = cfg.get_double("phantom.csf_fraction", ps.csf_fraction);
    ps.pd_range[0] = cfg.get_double("phantom.pd_min", ps.pd_range[0]);
    ps.pd_range[1] = cfg.get_double("phantom.pd_max", ps.pd_range[1]);
    ps.smooth_sigma_px = cfg.get_double("phantom.smooth_sigma_px", ps.smooth_sigma_px);
    g.params = sequence_from(cfg);
    return g;
}

TrainConfig train_config_from(const Config& cfg) {
    TrainConfig tc;
    tc.batch = static_cast<int>(cfg.get_int("train.batch", tc.batch));
    tc.patch = static_cast<int>(cfg.get_int("train.patch", tc.patch));
    tc.max_iters = static_cast<int>(cfg.get_int("train.max_iters", tc.max_iters));
    tc.momentum = cfg.get_double("train.momentum", tc.momentum);
    tc.weight_decay = cfg.get_double("train.weight_decay", tc.weight_decay);
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
    tc.t2_scale_ms = cfg.get_double("train.t2_scale_ms", tc.t2_scale_ms);
    tc.clip_theta = cfg.get_double("train.clip_theta", tc.clip_theta);
    if (cfg.has("train.lr_iters") != cfg.has("train.lr_values"))
        throw ConfigError("config: train.lr_iters and train.lr_values go together");
    if (cfg.has("train.lr_iters")) {
        const auto its = cfg.get_double_array("train.lr_iters");
        const auto vals = cfg.get_double_array("train.lr_values");
        if (its.size() != vals.size() || its.empty())
            throw ConfigError("config: lr_iters/lr_values must be equal-length, non-empty");
        tc.lr_schedule.clear();
        for (size_t i = 0; i < its.size(); ++i)
            tc.lr_schedule.emplace_back(static_cast<int>(its[i]), vals[i]);
    }
    tc.require_valid();
    return tc;
}

NetworkConfig network_config_from(const Config& cfg) {
    NetworkConfig nc;
    nc.n_param_layers = static_cast<int>(cfg.get_int("train.depth", nc.n_param_layers));
    nc.filters = static_cast<int>(cfg.get_int("train.filters", nc.filters));
    nc.kernel = static_cast<int>(cfg.get_int("train.kernel", nc.kernel));
    nc.require_valid();
    return nc;
}

DetachParams detach_params_from(const Config& cfg) {
    DetachParams dp;
    if (cfg.has("detach.lambda1")) dp.lambda1 = cfg.get_double("detach.lambda1");
    if (cfg.has("detach.lambda2")) dp.lambda2 = cfg.get_double("detach.lambda2");
    if (cfg.has("detach.lambda3")) dp.lambda3 = cfg.get_double("detach.lambda3");
    if (cfg.has("detach.kappa")) dp.kappa = cfg.get_double("detach.kappa");
    const std::string mode = cfg.get_string("detach.kappa_mode", "fixed");
    if (mode == "fixed")
        dp.kappa_mode = KappaMode::fixed;
    else if (mode == "median_ratio")
        dp.kappa_mode = KappaMode::median_ratio;
    else
        throw ConfigError("config: detach.kappa_mode must be fixed or median_ratio");
    dp.edge_sigma = cfg.get_double("detach.edge_sigma", dp.edge_sigma);
    dp.max_outer_iters =
        static_cast<int>(cfg.get_int("detach.max_outer_iters", dp.max_outer_iters));
    dp.pd_threshold = cfg.get_double("detach.pd_threshold", dp.pd_threshold);
    dp.tol = cfg.get_double("detach.tol", dp.tol);
    dp.require_valid();
    return dp;
}

std::vector<RoiSpec> load_rois(const Config& cfg, int rows, int cols) {
    const double ref = cfg.get_double("eval.ref_grid", 128.0);
    if (!(ref > 0)) throw ConfigError("config: eval.ref_grid must be positive");
    const double sx = cols / ref, sy = rows / ref;
    std::vector<RoiSpec> rois;
    for (int i = 1;; ++i) {
        const std::string key = "eval.roi_" + std::to_string(i);
        if (!cfg.has(key)) break;
        const auto v = cfg.get_double_array(key);
        if (v.size() != 4)
            throw ConfigError("config: " + key + " must be [id, x, y, radius]");
        RoiSpec roi;
        roi.id = static_cast<int>(v[0]);
        roi.center_px = {v[1] * sx, v[2] * sy};
        roi.radius_px = std::max(1.0, v[3] * std::min(sx, sy));
        rois.push_back(roi);
    }
    return rois;
}

ResNet<float> run_training(const std::string& manifest_path,
                           const NetworkConfig& net_cfg, const TrainConfig& tc,
                           const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw IoError("run_training: cannot create output dir: " + out_dir);
    LoadedDataset ds = load_dataset(manifest_path);
    if (ds.train.empty()) throw ConfigError("run_training: empty train split");
    return train(ds.train, ds.test, net_cfg, tc,
                 (fs::path(out_dir) / "training.csv").string(), out_dir);
}

BrainEvalImage brain_eval_image(const GenDatasetConfig& g, double shift_scale,
                                std::uint64_t noise_seed) {
    const GridSpec acq{g.rows, g.cols, g.fov_x_cm, g.fov_y_cm};
    GenDatasetConfig bg = g;
    bg.phantom = PhantomKind::brain;
    const TissueMap map = make_phantom(bg, acq, 0);
    const SequenceParams p = scaled_shifts(g.params, shift_scale);
    const ComplexImage clean = forward_oled(map, p);
    const ComplexImage noisy = add_noise(clean, g.snr_db, noise_seed);
    BrainEvalImage out;
    out.input = remove_double_echo(noisy, p).image;
    out.ref_t2_ms = map.t2_ms;
    out.mask = MaskRaster(acq.rows, acq.cols);
    for (int i = 0; i < out.mask.size(); ++i)
        out.mask[i] = out.ref_t2_ms[i] > 0.0 ? 1 : 0;
    return out;
}

namespace {

SweepCell eval_cell(const std::string& cell_id, ResNet<float>& net,
                    const BrainEvalImage& img, const std::vector<RoiSpec>& rois) {
    SweepCell cell;
    cell.cell_id = cell_id;
    const RealRaster est = infer_t2(img.input, net, true);
    const T2ErrorReport rep = t2_error_report(est, img.ref_t2_ms, img.mask, rois);
    cell.ok = true;
    cell.median_rel_err = rep.median_rel_err;
    cell.worst_roi_id = rep.worst_roi_id;
    cell.worst_dev_ms = rep.worst_roi_dev_ms;
    cell.worst_dev_pct = rep.worst_roi_dev_pct;
    cell.stats = roi_stats(est, img.mask, rois);
    return cell;
}

constexpr std::uint64_t kEvalNoiseStream = 777001;

}  // namespace

std::vector<SweepCell> sweep_depth(const Config& cfg, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw IoError("sweep: cannot create output dir: " + out_dir);
    if (!cfg.has("sweep.depths")) throw ConfigError("config: sweep.depths missing");
    const auto depths = cfg.get_double_array("sweep.depths");
    if (depths.empty()) throw ConfigError("config: sweep.depths is empty");

    GenDatasetConfig g = gen_config_from(cfg);
    g.out_dir = (fs::path(out_dir) / "dataset").string();
    gen_dataset(g);
    const std::string manifest = (fs::path(g.out_dir) / "manifest.json").string();

    const BrainEvalImage img =
        brain_eval_image(g, 1.0, rng::derive(g.seed, kEvalNoiseStream));
    const auto rois = load_rois(cfg, g.rows, g.cols);
    const TrainConfig tc = train_config_from(cfg);

    std::vector<SweepCell> cells;
    for (double d : depths) {
        const std::string cell_id = "depth" + std::to_string(static_cast<int>(d));
        try {
            NetworkConfig nc = network_config_from(cfg);
            nc.n_param_layers = static_cast<int>(d);
            nc.require_valid();
            ResNet<float> net = run_training(
                manifest, nc, tc, (fs::path(out_dir) / cell_id).string());
            cells.push_back(eval_cell(cell_id, net, img, rois));
        } catch (const std::exception& e) {
            SweepCell cell;
            cell.cell_id = cell_id;
            cell.ok = false;
            cell.error = e.what();
            cells.push_back(std::move(cell));
        }
    }
    write_sweep_csv((fs::path(out_dir) / "sweep.csv").string(), cells);
    return cells;
}

std::vector<SweepCell> sweep_robustness(const Config& cfg,
                                        const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw IoError("sweep: cannot create output dir: " + out_dir);
    std::vector<double> deviations{0.0, 0.05, 0.10};
    if (cfg.has("sweep.deviations")) deviations = cfg.get_double_array("sweep.deviations");
    if (deviations.empty()) throw ConfigError("config: sweep.deviations is empty");

    const GenDatasetConfig base = gen_config_from(cfg);
    const double jitter = base.jitter_frac > 0.0 ? base.jitter_frac : 0.1;
    const auto rois = load_rois(cfg, base.rows, base.cols);
    const TrainConfig tc = train_config_from(cfg);
    const NetworkConfig nc = network_config_from(cfg);

    std::vector<SweepCell> cells;
    for (const std::string mode : {"single", "multiple"}) {
        GenDatasetConfig g = base;
        g.jitter_frac = mode == "single" ? 0.0 : jitter;
        g.out_dir = (fs::path(out_dir) / ("data_" + mode)).string();
        gen_dataset(g);
        ResNet<float> net =
            run_training((fs::path(g.out_dir) / "manifest.json").string(), nc, tc,
                         (fs::path(out_dir) / ("model_" + mode)).string());
        for (double dev : deviations) {
            const std::string cell_id =
                mode + "/dev" + std::to_string(static_cast<int>(std::lround(100 * dev)));
            try {
                const BrainEvalImage img = brain_eval_image(
                    base, 1.0 + dev, rng::derive(base.seed, kEvalNoiseStream));
                cells.push_back(eval_cell(cell_id, net, img, rois));
            } catch (const std::exception& e) {
                SweepCell cell;
                cell.cell_id = cell_id;
                cell.ok = false;
                cell.error = e.what();
                cells.push_back(std::move(cell));
            }
        }
    }
    write_sweep_csv((fs::path(out_dir) / "sweep.csv").string(), cells);
    return cells;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepCell>& cells) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f,
                 "cell_id,ok,error,median_rel_err,worst_roi_id,worst_dev_ms,"
                 "worst_dev_pct,roi_id,roi_mean_ms,roi_std_ms,roi_n\n");
    for (const auto& c : cells) {
        if (!c.ok) {
            std::string msg = c.error;
            std::replace(msg.begin(), msg.end(), '"', '\'');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            std::fprintf(f, "%s,0,\"%s\",,,,,,,,\n", c.cell_id.c_str(), msg.c_str());
            continue;
        }
        for (const auto& s : c.stats)
            std::fprintf(f, "%s,1,,%.9g,%d,%.9g,%.9g,%d,%.9g,%.9g,%d\n",
                         c.cell_id.c_str(), c.median_rel_err, c.worst_roi_id,
                         c.worst_dev_ms, c.worst_dev_pct, s.id, s.mean_ms, s.std_ms,
                         s.n);
        if (c.stats.empty())
            std::fprintf(f, "%s,1,,%.9g,%d,%.9g,%.9g,,,,\n", c.cell_id.c_str(),
                         c.median_rel_err, c.worst_roi_id, c.worst_dev_ms,
                         c.worst_dev_pct);
    }
    std::fclose(f);
}

}  // namespace oled
