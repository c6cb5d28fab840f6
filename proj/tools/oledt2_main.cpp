// oledt2: phantom simulation, overlapped-echo acquisition, double-echo
// removal, and the two T2-mapping reconstructions (iterative detachment and
// the residual network), driven by flat-text config files.
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <oled/detach.hpp>
#include <oled/errors.hpp>
#include <oled/evalrep.hpp>
#include <oled/io.hpp>
#include <oled/layers.hpp>
#include <oled/pipeline.hpp>
#include <oled/resnet.hpp>
#include <oled/rng.hpp>
#include <oled/train.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using oled::Config;

namespace {

Config load_config(const std::string& path) {
    if (path.empty()) return Config::parse_string("");
    return Config::parse_file(path);
}

int cmd_gen_dataset(const std::string& config_path, const std::string& out_dir,
                    std::int64_t seed_override) {
    const Config cfg = load_config(config_path);
    oled::GenDatasetConfig g = oled::gen_config_from(cfg);
    if (!out_dir.empty()) g.out_dir = out_dir;
    if (seed_override >= 0) g.seed = static_cast<std::uint64_t>(seed_override);
    const oled::DatasetManifest m = oled::gen_dataset(g);
    int n_train = 0;
    for (const auto& r : m.records) n_train += r.split == "train" ? 1 : 0;
    json out{{"out_dir", g.out_dir},
             {"count", m.records.size()},
             {"train", n_train},
             {"test", m.records.size() - n_train},
             {"manifest", (fs::path(g.out_dir) / "manifest.json").string()}};
    std::printf("%s\n", out.dump().c_str());
    return 0;
}

int cmd_reconstruct(const std::string& config_path, const std::string& input_path,
                    const std::string& method, const std::string& checkpoint,
                    const std::string& out_path, const std::string& report_path,
                    int runs, int warmup) {
    const Config cfg = load_config(config_path);
    json meta;
    const oled::ComplexImage input = oled::read_oimg_complex(input_path, &meta);

    oled::SequenceParams params = meta.contains("params")
                                      ? oled::sequence_params_from_json(meta["params"])
                                      : oled::sequence_from(cfg);

    oled::ReconstructResult res;
    if (method == "detach") {
        res = oled::reconstruct_detach(input, params, oled::detach_params_from(cfg),
                                       runs, warmup);
    } else if (method == "network") {
        if (checkpoint.empty())
            throw oled::ConfigError("reconstruct: network method needs --checkpoint");
        oled::ResNet<float> net = oled::ResNet<float>::load(checkpoint);
        const bool guided = cfg.get_bool("train.guided_filter", true);
        res = oled::reconstruct_network(input, net, guided, runs, warmup);
    } else {
        throw oled::ConfigError("reconstruct: method must be detach or network");
    }

    if (!out_path.empty())
        oled::write_oimg(out_path, res.t2_ms, input.grid,
                         {{"kind", "t2_ms"}, {"method", res.method}});
    json rep{{"method", res.method},
             {"wall_ms_median", res.wall_ms_median},
             {"wall_ms_runs", res.wall_ms_runs},
             {"converged", res.converged},
             {"iterations", res.iterations},
             {"rows", res.t2_ms.rows()},
             {"cols", res.t2_ms.cols()}};
    if (!report_path.empty()) {
        std::ofstream f(report_path, std::ios::binary);
        if (!f) throw oled::IoError("cannot open for writing: " + report_path);
        f << rep.dump(2) << "\n";
    }
    std::printf("%s\n", rep.dump().c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest,
              const std::string& out_dir) {
    const Config cfg = load_config(config_path);
    const oled::TrainConfig tc = oled::train_config_from(cfg);
    const oled::NetworkConfig nc = oled::network_config_from(cfg);
    oled::ResNet<float> net = oled::run_training(manifest, nc, tc, out_dir);
    json out{{"iterations", net.iteration()},
             {"train_loss", net.train_loss()},
             {"checkpoint", (fs::path(out_dir) / "final.olnc").string()},
             {"log", (fs::path(out_dir) / "training.csv").string()}};
    std::printf("%s\n", out.dump().c_str());
    return 0;
}

int cmd_sweep(const std::string& config_path, std::string kind,
              const std::string& out_dir) {
    const Config cfg = load_config(config_path);
    if (kind.empty()) kind = cfg.get_string("sweep.kind");
    std::vector<oled::SweepCell> cells;
    if (kind == "depth")
        cells = oled::sweep_depth(cfg, out_dir);
    else if (kind == "robustness")
        cells = oled::sweep_robustness(cfg, out_dir);
    else
        throw oled::ConfigError("sweep: kind must be depth or robustness");
    json out = json::array();
    for (const auto& c : cells) {
        json jc{{"cell", c.cell_id}, {"ok", c.ok}};
        if (c.ok) {
            jc["median_rel_err"] = c.median_rel_err;
            jc["worst_roi_id"] = c.worst_roi_id;
            jc["worst_dev_ms"] = c.worst_dev_ms;
            jc["worst_dev_pct"] = c.worst_dev_pct;
        } else {
            jc["error"] = c.error;
        }
        out.push_back(jc);
    }
    std::printf("%s\n",
                json{{"kind", kind}, {"csv", (fs::path(out_dir) / "sweep.csv").string()},
                     {"cells", out}}
                    .dump()
                    .c_str());
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& est_path,
                 const std::string& ref_path, const std::string& out_prefix) {
    const Config cfg = load_config(config_path);
    const oled::RealRaster est = oled::read_oimg_real(est_path);
    oled::GridSpec grid;
    const oled::RealRaster ref = oled::read_oimg_real(ref_path, nullptr, &grid);
    if (!est.same_shape(ref))
        throw oled::ConfigError("evaluate: est/ref shape mismatch");
    oled::MaskRaster mask(ref.rows(), ref.cols());
    for (int i = 0; i < ref.size(); ++i) mask[i] = ref[i] > 0.0 ? 1 : 0;

    const auto rois = oled::load_rois(cfg, ref.rows(), ref.cols());
    const oled::T2ErrorReport rep = oled::t2_error_report(est, ref, mask, rois);
    const auto stats = oled::roi_stats(est, mask, rois);

    if (!out_prefix.empty()) {
        oled::write_report_json(out_prefix + "_report.json", rep, stats);
        oled::write_roi_stats_csv(out_prefix + "_rois.csv", stats);
        oled::write_oimg(out_prefix + "_errmap.oimg", rep.error_map_ms, grid,
                         {{"kind", "t2_err_ms"}});
        if (cfg.has("eval.profile")) {
            const auto pr = cfg.get_double_array("eval.profile");
            if (pr.size() != 4)
                throw oled::ConfigError("config: eval.profile must be [cx, cy, r, n]");
            const auto path = oled::circle_path({pr[0], pr[1]}, pr[2],
                                                static_cast<int>(pr[3]));
            oled::write_profile_csv(out_prefix + "_profile.csv",
                                    oled::profile_trace(est, path));
        }
    }
    std::printf("%s\n", oled::report_to_json(rep, stats).c_str());
    return 0;
}

// End-to-end finite-difference check of the full network in double precision:
// analytic d(loss)/d(param) from backward vs central differences on a sample
// of parameters per tensor.
int cmd_gradcheck(int seeds, double tol, int samples_per_tensor) {
    using oled::Tensor4;
    const oled::NetworkConfig nc{4, 4, 3, 2, 1};
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        oled::ResNet<double> net(nc, oled::rng::derive(0xC0FFEE, seed));
        oled::rng::Stream rs(oled::rng::derive(0xBEEF, seed));
        Tensor4<double> x(2, 2, 8, 8), target(2, 1, 8, 8);
        for (auto& v : x.data) v = rs.gaussian();
        for (auto& v : target.data) v = rs.gaussian();

        Tensor4<double> scratch(2, 1, 8, 8);
        const auto loss_of = [&] {
            return oled::mse_loss(net.forward(x, true), target, scratch);
        };
        Tensor4<double> pred = net.forward(x, true);
        Tensor4<double> dpred(2, 1, 8, 8);
        oled::mse_loss(pred, target, dpred);
        net.backward(dpred);

        const auto check = [&](std::vector<double>& w, const std::vector<double>& dw) {
            oled::rng::Stream pick(oled::rng::derive(0xF00D, seed));
            for (int s = 0; s < samples_per_tensor; ++s) {
                const auto i = static_cast<size_t>(
                    pick.uniform_int(0, static_cast<std::int64_t>(w.size()) - 1));
                const double h = 1e-6, keep = w[i];
                w[i] = keep + h;
                const double lp = loss_of();
                w[i] = keep - h;
                const double lm = loss_of();
                w[i] = keep;
                const double num = (lp - lm) / (2 * h);
                const double rel = std::abs(num - dw[i]) /
                                   std::max({std::abs(num), std::abs(dw[i]), 1.0});
                worst = std::max(worst, rel);
            }
        };
        for (auto& cv : net.convs()) {
            check(cv.w.data, cv.dw.data);
            check(cv.b, cv.db);
        }
        for (auto& bn : net.bns()) {
            check(bn.gamma, bn.dgamma);
            check(bn.beta, bn.dbeta);
        }
    }
    const bool ok = worst <= tol;
    std::printf("%s\n", json{{"max_rel_err", worst}, {"tol", tol}, {"ok", ok}}
                            .dump()
                            .c_str());
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"overlapped-echo T2 mapping toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, out_path, report_path, input_path, method,
        checkpoint, manifest, est_path, ref_path, out_prefix, sweep_kind;
    std::int64_t seed_override = -1;
    int runs = 5, warmup = 1, seeds = 5, samples = 12;
    double tol = 1e-4;

    auto* gen = app.add_subcommand("gen-dataset", "simulate an image/T2 pair dataset");
    gen->add_option("--config", config_path, "config file")->required();
    gen->add_option("--out", out_dir, "output directory (overrides config)");
    gen->add_option("--seed", seed_override, "root seed (overrides config)");

    auto* rec = app.add_subcommand("reconstruct", "T2 map from one acquired image");
    rec->add_option("--config", config_path, "config file");
    rec->add_option("--input", input_path, "input OIMG")->required();
    rec->add_option("--method", method, "detach | network")->required();
    rec->add_option("--checkpoint", checkpoint, "network checkpoint (.olnc)");
    rec->add_option("--out", out_path, "output T2 OIMG");
    rec->add_option("--report", report_path, "timing/convergence report JSON");
    rec->add_option("--runs", runs, "timed runs (median reported)");
    rec->add_option("--warmup", warmup, "untimed warm-up runs");

    auto* tr = app.add_subcommand("train", "train the residual network");
    tr->add_option("--config", config_path, "config file")->required();
    tr->add_option("--manifest", manifest, "dataset manifest.json")->required();
    tr->add_option("--out", out_dir, "output directory")->required();

    auto* sw = app.add_subcommand("sweep", "depth or robustness sweep");
    sw->add_option("--config", config_path, "config file")->required();
    sw->add_option("--kind", sweep_kind, "depth | robustness (default: sweep.kind)");
    sw->add_option("--out", out_dir, "output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "compare an estimate with its reference");
    ev->add_option("--config", config_path, "config file (ROIs)");
    ev->add_option("--est", est_path, "estimated T2 OIMG")->required();
    ev->add_option("--ref", ref_path, "reference T2 OIMG")->required();
    ev->add_option("--out-prefix", out_prefix, "report/CSV output prefix");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference network check");
    gc->add_option("--seeds", seeds, "number of random initialisations");
    gc->add_option("--tol", tol, "relative error tolerance");
    gc->add_option("--samples", samples, "checked parameters per tensor");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_dataset(config_path, out_dir, seed_override);
        if (rec->parsed())
            return cmd_reconstruct(config_path, input_path, method, checkpoint,
                                   out_path, report_path, runs, warmup);
        if (tr->parsed()) return cmd_train(config_path, manifest, out_dir);
        if (sw->parsed()) return cmd_sweep(config_path, sweep_kind, out_dir);
        if (ev->parsed()) return cmd_evaluate(config_path, est_path, ref_path, out_prefix);
        if (gc->parsed()) return cmd_gradcheck(seeds, tol, samples);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n",
                     json{{"error", e.what()}}.dump().c_str());
        return 1;
    }
    return 0;
}
