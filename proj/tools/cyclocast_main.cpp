#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "cyclocast/data/dataset.hpp"
#include "cyclocast/diffusion/diffusion.hpp"
#include "cyclocast/io/report.hpp"
#include "cyclocast/io/run_config.hpp"
#include "cyclocast/kern/kernels.hpp"
#include "cyclocast/metrics/metrics.hpp"
#include "cyclocast/net/checkpoint.hpp"
#include "cyclocast/rollout/rollout.hpp"
#include "cyclocast/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace cyclocast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

io::RunConfig load_config(const std::string& path, std::uint64_t seed_override, bool has_seed) {
    io::RunConfig rc = io::RunConfig::from_file(path);
    if (has_seed) {
        rc.seed = seed_override;
        rc.stage1.seed = rc.seed;
        rc.stage2.seed = rc.seed + 1;
    }
    return rc;
}

net::ConditioningBundle bundle_from_record(const data::ClipRecord& rec) {
    return net::make_bundle(rec.cond_frame, rec.cond_era5, rec.clip.mask);
}

// One guided reverse-chain generation conditioned on `cond`.
Tensor sample_clip(net::Denoiser& model, const net::ConditioningBundle& cond,
                   const diffusion::NoiseSchedule& sched, const diffusion::GuidanceConfig& gcfg,
                   int frames, std::uint64_t seed) {
    diffusion::DenoiserFn fn = [&](const Tensor& z, int t, double lam, bool null_cond) {
        if (!null_cond) return model.forward(z, t, lam, cond);
        return model.forward(z, t, lam, net::null_bundle(cond));
    };
    const std::int64_t H = cond.initial_frame.dim(0), W = cond.initial_frame.dim(1);
    return diffusion::sample(fn, {frames, 1, H, W}, cond.mask, sched, gcfg, seed);
}

data::VideoClip clip_from_values(const Tensor& values4, const data::ClipRecord& like) {
    data::VideoClip c;
    const std::int64_t T = values4.dim(0), H = values4.dim(2), W = values4.dim(3);
    c.frames = Tensor({T, H, W});
    std::copy_n(values4.data(), values4.size(), c.frames.data());
    c.mask = like.clip.mask;
    c.timestamps.resize(T);
    for (std::int64_t i = 0; i < T; ++i) c.timestamps[i] = static_cast<double>(i);
    return c;
}

void write_frame_ppm(const fs::path& path, const Tensor& frame) {
    const std::int64_t H = frame.dim(0), W = frame.dim(1);
    std::string bytes = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    for (std::int64_t i = 0; i < H * W; ++i) {
        const double v = std::clamp((frame[i] + 1.0) * 0.5, 0.0, 1.0);
        const auto g = static_cast<unsigned char>(std::lround(v * 255.0));
        bytes.push_back(static_cast<char>(g));
        bytes.push_back(static_cast<char>(g));
        bytes.push_back(static_cast<char>(g));
    }
    io::write_text_atomic(path, bytes);
}

int cmd_gen_data(const io::RunConfig& rc) {
    const bool built = data::build_dataset(rc.dataset);
    rc.write_resolved(rc.dataset.dir / "config_resolved.ini");
    if (!built) {
        std::cout << "dataset exists at " << rc.dataset.dir.string() << ", leaving as-is\n";
        return kExitOk;
    }
    const data::Manifest m = data::read_manifest(rc.dataset.dir);
    std::size_t n_train = 0, n_test = 0;
    for (const auto& e : m.entries) (e.split == "train" ? n_train : n_test) += 1;
    std::cout << "dataset written to " << rc.dataset.dir.string() << ": " << rc.dataset.train_storms
              << "/" << rc.dataset.test_storms << " storms, " << n_train << "/" << n_test
              << " clips\n";
    return kExitOk;
}

std::string losses_csv(const train::TrainReport& r) {
    std::ostringstream o;
    o << "epoch,mean_loss,seconds\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
        o << (e + 1) << "," << io::csv_num(r.epoch_loss[e]) << ","
          << io::csv_num(r.epoch_seconds[e]) << "\n";
    return o.str();
}

int cmd_train(io::RunConfig rc, const std::string& preset, bool skip_stage1,
              const std::string& out_override) {
    if (!preset.empty()) io::apply_preset(rc, preset);
    if (skip_stage1) rc.stage1.epochs = 0;
    if (!out_override.empty()) rc.out_dir = out_override;

    if (!fs::exists(rc.dataset.dir / "manifest.txt")) {
        std::cerr << "error: dataset not found at " << rc.dataset.dir.string()
                  << " (run gen-data first)\n";
        return kExitRuntime;
    }
    const data::Manifest m = data::read_manifest(rc.dataset.dir);
    const auto train_clips = data::load_split(m, "train");

    fs::create_directories(rc.out_dir);
    rc.write_resolved(rc.out_dir / "config_resolved.ini");

    const auto sched = diffusion::make_schedule(rc.schedule_kind, rc.schedule_steps);
    net::Denoiser model(rc.model, rc.seed);
    std::cout << "model parameters: " << model.param_count() << "\n";

    const auto [r1, r2] = two_stage_train(model, train_clips, sched, rc.stage1, rc.stage2, rc.out_dir);
    io::write_text_atomic(rc.out_dir / "losses_stage1.csv", losses_csv(r1));
    io::write_text_atomic(rc.out_dir / "losses_stage2.csv", losses_csv(r2));
    std::cout << "stage1 epochs " << r1.epoch_loss.size() << ", stage2 epochs "
              << r2.epoch_loss.size() << "\n";
    if (!r2.epoch_loss.empty())
        std::cout << "final stage2 mean loss " << r2.epoch_loss.back() << "\n";
    std::cout << "checkpoints in " << rc.out_dir.string() << "\n";
    return kExitOk;
}

diffusion::NoiseSchedule eval_schedule(const io::RunConfig& rc) {
    const int steps = rc.eval.sample_steps > 0 ? rc.eval.sample_steps : rc.schedule_steps;
    return diffusion::make_schedule(rc.schedule_kind, steps);
}

int cmd_sample(io::RunConfig rc, const std::string& checkpoint, int num,
               const std::string& out_override) {
    if (!out_override.empty()) rc.out_dir = out_override;
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint not found: " << checkpoint << "\n";
        return kExitRuntime;
    }
    const data::Manifest m = data::read_manifest(rc.dataset.dir);
    auto clips = data::load_split(m, "test");
    if (num > 0 && static_cast<std::size_t>(num) < clips.size()) clips.resize(num);

    rc.model = net::read_checkpoint_config(checkpoint);
    net::Denoiser model(rc.model, rc.seed);
    net::load_checkpoint(checkpoint, model);
    const auto sched = eval_schedule(rc);

    fs::create_directories(rc.out_dir);
    rc.write_resolved(rc.out_dir / "config_resolved.ini");

    std::ostringstream csv;
    csv << "clip,file,mean,stddev\n";
    Rng seeds(rc.seed);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto cond = bundle_from_record(clips[i]);
        Tensor gen = sample_clip(model, cond, sched, rc.guidance,
                                 static_cast<int>(clips[i].clip.length()), seeds.fork(i).next_u64());
        data::ClipRecord rec = clips[i];
        const data::VideoClip vc = clip_from_values(gen, clips[i]);
        rec.clip.frames = vc.frames;
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04zu.bin", i);
        data::write_clip(rc.out_dir / name, rec);

        Tensor first({vc.height(), vc.width()});
        std::copy_n(vc.frames.data(), first.size(), first.data());
        char ppm[32];
        std::snprintf(ppm, sizeof(ppm), "sample_%04zu.ppm", i);
        write_frame_ppm(rc.out_dir / ppm, first);

        const double mean = kern::active().sum(vc.frames.data(), vc.frames.size()) /
                            static_cast<double>(vc.frames.size());
        double var = 0.0;
        for (std::size_t j = 0; j < vc.frames.size(); ++j) {
            const double d = vc.frames[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(vc.frames.size());
        csv << i << "," << name << "," << io::csv_num(mean) << "," << io::csv_num(std::sqrt(var))
            << "\n";
    }
    io::write_text_atomic(rc.out_dir / "samples.csv", csv.str());
    std::cout << "wrote " << clips.size() << " samples to " << rc.out_dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(io::RunConfig rc, const std::string& checkpoint, const std::string& out_override) {
    if (!out_override.empty()) rc.out_dir = out_override;
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint not found: " << checkpoint << "\n";
        return kExitRuntime;
    }
    const data::Manifest m = data::read_manifest(rc.dataset.dir);
    auto clips = data::load_split(m, "test");
    if (rc.eval.max_clips > 0 && static_cast<std::size_t>(rc.eval.max_clips) < clips.size())
        clips.resize(rc.eval.max_clips);

    rc.model = net::read_checkpoint_config(checkpoint);
    net::Denoiser model(rc.model, rc.seed);
    net::load_checkpoint(checkpoint, model);
    const auto sched = eval_schedule(rc);

    fs::create_directories(rc.out_dir);
    rc.write_resolved(rc.out_dir / "config_resolved.ini");

    metrics::FeatureExtractor fx(rc.extractor);
    std::vector<data::FrameGrid> pred_frames, truth_frames;
    std::vector<data::VideoClip> pred_clips, truth_clips;

    std::ostringstream csv;
    csv << "# extractor_seed=" << rc.extractor.seed
        << " frame_feature_dim=" << rc.extractor.frame_feature_dim
        << " clip_feature_dim=" << rc.extractor.clip_feature_dim << "\n";
    csv << "row,mae,psnr,ssim,fid,fvd\n";

    Rng seeds(rc.seed);
    double sum_mae = 0.0, sum_psnr = 0.0, sum_ssim = 0.0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto cond = bundle_from_record(clips[i]);
        Tensor gen = sample_clip(model, cond, sched, rc.guidance,
                                 static_cast<int>(clips[i].clip.length()), seeds.fork(i).next_u64());
        data::VideoClip pred = clip_from_values(gen, clips[i]);
        const data::VideoClip& truth = clips[i].clip;

        const double v_mae = metrics::mae(pred, truth);
        const double v_psnr = metrics::psnr(pred, truth, 2.0);
        const double v_ssim = metrics::ssim(pred, truth);
        sum_mae += v_mae;
        sum_psnr += v_psnr;
        sum_ssim += v_ssim;
        csv << "clip_" << i << "," << io::csv_num(v_mae) << "," << io::csv_num(v_psnr) << ","
            << io::csv_num(v_ssim) << ",,\n";

        const std::size_t hw = static_cast<std::size_t>(truth.height()) * truth.width();
        for (std::int64_t f = 0; f < truth.length(); ++f) {
            data::FrameGrid pg, tg;
            pg.values = Tensor({truth.height(), truth.width()});
            tg.values = Tensor({truth.height(), truth.width()});
            std::copy_n(pred.frames.data() + f * hw, hw, pg.values.data());
            std::copy_n(truth.frames.data() + f * hw, hw, tg.values.data());
            pg.mask = truth.mask;
            tg.mask = truth.mask;
            pred_frames.push_back(std::move(pg));
            truth_frames.push_back(std::move(tg));
        }
        pred_clips.push_back(std::move(pred));
        truth_clips.push_back(clips[i].clip);
    }

    const double n = static_cast<double>(clips.size());
    const double v_fid = metrics::fid(pred_frames, truth_frames, fx);
    const double v_fvd = metrics::fvd(pred_clips, truth_clips, fx);
    csv << "summary," << io::csv_num(sum_mae / n) << "," << io::csv_num(sum_psnr / n) << ","
        << io::csv_num(sum_ssim / n) << "," << io::csv_num(v_fid) << "," << io::csv_num(v_fvd)
        << "\n";
    io::write_text_atomic(rc.out_dir / "eval.csv", csv.str());
    std::cout << "eval over " << clips.size() << " clips: mae " << sum_mae / n << " psnr "
              << sum_psnr / n << " ssim " << sum_ssim / n << " fid " << v_fid << " fvd " << v_fvd
              << "\n";
    return kExitOk;
}

int cmd_rollout(io::RunConfig rc, const std::string& checkpoint, int horizon,
                std::uint64_t storm_seed, bool has_storm_seed, const std::string& mode,
                const std::string& out_override) {
    if (!out_override.empty()) rc.out_dir = out_override;
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint not found: " << checkpoint << "\n";
        return kExitRuntime;
    }
    if (horizon > 0) rc.rollout.horizon_hours = horizon;
    const int H_hours = rc.rollout.horizon_hours;

    const data::Manifest m = data::read_manifest(rc.dataset.dir);
    if (!has_storm_seed) {
        for (const auto& e : m.entries)
            if (e.split == "test") {
                storm_seed = e.storm_seed;
                break;
            }
    }

    rc.model = net::read_checkpoint_config(checkpoint);
    net::Denoiser model(rc.model, rc.seed);
    net::load_checkpoint(checkpoint, model);
    const auto sched = eval_schedule(rc);

    fs::create_directories(rc.out_dir);
    rc.write_resolved(rc.out_dir / "config_resolved.ini");

    // Regenerate the ground-truth storm for this seed; hour 0 is the initial
    // observed frame, the forecast covers hours 1..horizon.
    const int K = m.spec.cond_timesteps;
    const int steps = H_hours + K + 1;
    data::StormSequence seq = data::generate_storm(data::storm_params_for(m.spec, storm_seed), steps);

    const std::int64_t Hpix = m.spec.height, Wpix = m.spec.width;
    const std::size_t hw = static_cast<std::size_t>(Hpix) * Wpix;
    std::uint64_t warn = 0;

    Tensor timeline({steps, m.spec.era5_channels, Hpix, Wpix});
    for (int s = 0; s < steps; ++s)
        for (int c = 0; c < m.spec.era5_channels; ++c) {
            const double* src = seq.era5.data() + (static_cast<std::size_t>(s) * m.spec.era5_channels + c) * hw;
            double* dst = timeline.data() + (static_cast<std::size_t>(s) * m.spec.era5_channels + c) * hw;
            for (std::size_t i = 0; i < hw; ++i)
                dst[i] = data::normalize_value(src[i], m.stats.era5[c], &warn);
        }

    Tensor initial_frame({Hpix, Wpix});
    for (std::size_t i = 0; i < hw; ++i)
        initial_frame[i] = data::normalize_value(seq.ir[0].values[i], m.stats.ir, &warn);
    Tensor mask({Hpix, Wpix});
    mask.fill(1.0);

    Tensor era0({K, m.spec.era5_channels, Hpix, Wpix});
    std::copy_n(timeline.data(), era0.size(), era0.data());
    const auto initial = net::make_bundle(initial_frame, std::move(era0), mask);

    Tensor truth({H_hours, Hpix, Wpix});
    for (int h = 1; h <= H_hours; ++h)
        for (std::size_t i = 0; i < hw; ++i)
            truth[static_cast<std::size_t>(h - 1) * hw + i] =
                data::normalize_value(seq.ir[h].values[i], m.stats.ir, &warn);

    const int chunk_len = mode == "frame" ? 1 : m.spec.clip_len;
    auto sampler = rollout::make_denoiser_sampler(model, sched, rc.guidance, chunk_len);
    rollout::RolloutTrace trace =
        rollout::cascade_forecast(sampler, chunk_len, initial, timeline, H_hours, rc.seed);
    rollout::evaluate_trace(trace, truth, mask, rc.rollout.drop_window, rc.rollout.drop_threshold);

    std::ostringstream trace_csv;
    trace_csv << "hour,ssim,chunk_index\n";
    for (int h = 1; h <= H_hours; ++h)
        trace_csv << h << "," << io::csv_num(trace.ssim_curve[h - 1]) << ","
                  << trace.chunk_index[h - 1] << "\n";
    io::write_text_atomic(rc.out_dir / "trace.csv", trace_csv.str());

    std::ostringstream plot;
    plot << "type,x,y\n";
    for (int h = 1; h <= H_hours; ++h)
        plot << "curve," << h << "," << io::csv_num(trace.ssim_curve[h - 1]) << "\n";
    plot << "min_marker," << (trace.min_ssim_index + 1) << "," << io::csv_num(trace.min_ssim_value)
         << "\n";
    plot << "reliable_horizon," << trace.reliable_horizon_hours << ",\n";
    io::write_text_atomic(rc.out_dir / "plotdata.csv", plot.str());

    io::Chart chart;
    chart.title = "ssim vs hour";
    chart.series.push_back({trace.ssim_curve, 30, 60, 200});
    chart.marker_x = trace.min_ssim_index + 1;
    io::render_chart_ppm(rc.out_dir / "ssim_chart.ppm", chart);

    std::cout << "rollout horizon " << H_hours << " (" << trace.chunks.size() << " chunks, mode "
              << (chunk_len == 1 ? "frame" : "video") << "): min ssim " << trace.min_ssim_value
              << " at hour " << (trace.min_ssim_index + 1) << ", reliable horizon "
              << trace.reliable_horizon_hours << " h\n";
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& evals, const std::vector<std::string>& traces,
               const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ostringstream summary;
    summary << "source,mae,psnr,ssim,fid,fvd\n";
    for (const auto& path : evals) {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "error: cannot open eval csv: " << path << "\n";
            return kExitRuntime;
        }
        std::string line, last_summary;
        while (std::getline(in, line))
            if (line.rfind("summary,", 0) == 0) last_summary = line;
        if (last_summary.empty()) {
            std::cerr << "error: no summary row in " << path << "\n";
            return kExitRuntime;
        }
        summary << fs::path(path).parent_path().filename().string()
                << last_summary.substr(std::string("summary").size()) << "\n";
    }
    io::write_text_atomic(fs::path(out_dir) / "summary.csv", summary.str());

    int chart_count = 0;
    for (const auto& path : traces) {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "error: cannot open trace csv: " << path << "\n";
            return kExitRuntime;
        }
        std::string line;
        std::getline(in, line);  // header
        std::vector<double> curve;
        while (std::getline(in, line)) {
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos) continue;
            curve.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        }
        if (curve.empty()) {
            std::cerr << "error: empty trace: " << path << "\n";
            return kExitRuntime;
        }
        const auto marker = rollout::min_ssim_marker(curve);

        const std::string stem = fs::path(path).parent_path().filename().string() + "_" +
                                 fs::path(path).stem().string();
        std::ostringstream plot;
        plot << "type,x,y\n";
        for (std::size_t h = 0; h < curve.size(); ++h)
            plot << "curve," << (h + 1) << "," << io::csv_num(curve[h]) << "\n";
        plot << "min_marker," << (marker.first + 1) << "," << io::csv_num(marker.second) << "\n";
        io::write_text_atomic(fs::path(out_dir) / ("chart_" + stem + ".csv"), plot.str());

        io::Chart chart;
        chart.series.push_back({curve, 30, 60, 200});
        chart.marker_x = marker.first + 1;
        io::render_chart_ppm(fs::path(out_dir) / ("chart_" + stem + ".ppm"), chart);
        ++chart_count;
    }
    std::cout << "report: " << evals.size() << " eval summaries, " << chart_count << " charts in "
              << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cyclocast: conditional video-diffusion forecasting on synthetic cyclone data"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, preset, out_override, mode = "video";
    std::vector<std::string> eval_csvs, trace_csvs;
    std::uint64_t seed = 0, storm_seed = 0;
    bool skip_stage1 = false;
    int num = 4, horizon = 0;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
    };
    auto add_seed = [&](CLI::App* cmd) { return cmd->add_option("--seed", seed, "run seed"); };

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_config(gen);
    auto* gen_seed = add_seed(gen);

    auto* tr = app.add_subcommand("train", "two-stage curriculum training");
    add_config(tr);
    auto* tr_seed = add_seed(tr);
    tr->add_option("--preset", preset, "epoch preset: full (1:3) or lowdata (1:1)");
    tr->add_flag("--skip-stage1", skip_stage1, "multi-frame training only (ablation arm)");
    tr->add_option("--out", out_override, "output directory override");

    auto* sa = app.add_subcommand("sample", "generate forecast clips from a checkpoint");
    add_config(sa);
    auto* sa_seed = add_seed(sa);
    sa->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    sa->add_option("--num", num, "number of test clips to sample");
    sa->add_option("--out", out_override, "output directory override");

    auto* ev = app.add_subcommand("eval", "metric suite over the test split");
    add_config(ev);
    auto* ev_seed = add_seed(ev);
    ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    ev->add_option("--out", out_override, "output directory override");

    auto* ro = app.add_subcommand("rollout", "cascaded long-horizon forecast");
    add_config(ro);
    auto* ro_seed = add_seed(ro);
    ro->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    ro->add_option("--horizon", horizon, "forecast horizon in hours");
    auto* ro_storm =
        ro->add_option("--storm-seed", storm_seed, "storm to forecast (default: first test storm)");
    ro->add_option("--mode", mode, "video (clip chunks) or frame (T=1 autoregressive)")
        ->check(CLI::IsMember({"video", "frame"}));
    ro->add_option("--out", out_override, "output directory override");

    auto* re = app.add_subcommand("report", "charts and summary table from eval/rollout CSVs");
    re->add_option("--eval", eval_csvs, "eval.csv files");
    re->add_option("--trace", trace_csvs, "trace.csv files");
    re->add_option("--out", out_override, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(load_config(config_path, seed, !gen_seed->empty()));
        if (tr->parsed())
            return cmd_train(load_config(config_path, seed, !tr_seed->empty()), preset, skip_stage1,
                             out_override);
        if (sa->parsed())
            return cmd_sample(load_config(config_path, seed, !sa_seed->empty()), checkpoint, num,
                              out_override);
        if (ev->parsed())
            return cmd_eval(load_config(config_path, seed, !ev_seed->empty()), checkpoint,
                            out_override);
        if (ro->parsed())
            return cmd_rollout(load_config(config_path, seed, !ro_seed->empty()), checkpoint,
                               horizon, storm_seed, !ro_storm->empty(), mode, out_override);
        if (re->parsed()) return cmd_report(eval_csvs, trace_csvs, out_override);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
