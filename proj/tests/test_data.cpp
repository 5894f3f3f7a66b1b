#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cyclocast/core/rng.hpp"
#include "cyclocast/data/dataset.hpp"
#include "cyclocast/data/synth.hpp"
#include "cyclocast/data/types.hpp"

using namespace cyclocast;
using namespace cyclocast::data;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("cyclocast_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("sanitize") {
    Tensor raw({5, 8});
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = 0.1 * static_cast<double>(i);

    SUBCASE("NaN at one position") {
        raw[3 * 8 + 7] = std::nan("");
        FrameGrid g = sanitize(raw);
        CHECK(g.values[3 * 8 + 7] == 0.0);
        CHECK(g.mask[3 * 8 + 7] == 0.0);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (i == 3 * 8 + 7) continue;
            CHECK(g.values[i] == raw[i]);
            CHECK(g.mask[i] == 1.0);
        }
    }
    SUBCASE("NaN-free grid is identity") {
        FrameGrid g = sanitize(raw);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            CHECK(g.values[i] == raw[i]);
            CHECK(g.mask[i] == 1.0);
        }
    }
    SUBCASE("all-NaN grid") {
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::nan("");
        FrameGrid g = sanitize(raw);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            CHECK(g.values[i] == 0.0);
            CHECK(g.mask[i] == 0.0);
        }
    }
}

namespace {

std::vector<FrameGrid> make_sequence(int n, int h, int w) {
    std::vector<FrameGrid> seq;
    for (int f = 0; f < n; ++f) {
        Tensor raw({h, w});
        for (std::size_t i = 0; i < raw.size(); ++i)
            raw[i] = std::sin(0.01 * static_cast<double>(i) + f);
        seq.push_back(sanitize(raw));
    }
    return seq;
}

}  // namespace

TEST_CASE("assemble_clips") {
    SUBCASE("window counts") {
        auto seq = make_sequence(25, 4, 4);
        CHECK(assemble_clips(seq, 10, 10).size() == 2);
        CHECK(assemble_clips(seq, 10, 5).size() == 4);
    }
    SUBCASE("identity window") {
        auto seq = make_sequence(10, 4, 4);
        auto clips = assemble_clips(seq, 10, 10);
        REQUIRE(clips.size() == 1);
        const std::size_t hw = 16;
        for (int f = 0; f < 10; ++f)
            for (std::size_t i = 0; i < hw; ++i)
                CHECK(clips[0].frames[f * hw + i] == seq[f].values[i]);
        for (int f = 1; f < 10; ++f) CHECK(clips[0].timestamps[f] > clips[0].timestamps[f - 1]);
    }
    SUBCASE("mask AND semantics") {
        auto seq = make_sequence(20, 4, 4);
        seq[3].values[5] = 0.0;
        seq[3].mask[5] = 0.0;
        auto clips = assemble_clips(seq, 10, 10);
        REQUIRE(clips.size() == 2);
        CHECK(clips[0].mask[5] == 0.0);  // contains frame 3
        CHECK(clips[1].mask[5] == 1.0);  // frames 10..19
        const std::size_t hw = 16;
        for (int f = 0; f < 10; ++f) CHECK(clips[0].frames[f * hw + 5] == 0.0);
    }
    SUBCASE("partition property on an all-valid sequence") {
        auto seq = make_sequence(30, 4, 4);
        auto clips = assemble_clips(seq, 10, 10);
        REQUIRE(clips.size() == 3);
        const std::size_t hw = 16;
        for (int c = 0; c < 3; ++c)
            for (int f = 0; f < 10; ++f)
                for (std::size_t i = 0; i < hw; ++i)
                    CHECK(clips[c].frames[f * hw + i] == seq[c * 10 + f].values[i]);
    }
    SUBCASE("errors") {
        auto seq = make_sequence(5, 4, 4);
        CHECK_THROWS_AS(assemble_clips(seq, 10, 10), std::invalid_argument);
        CHECK_THROWS_AS(assemble_clips(seq, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("normalize / denormalize") {
    NormStats s{-3.0, 5.0};

    SUBCASE("endpoints") {
        CHECK(normalize_value(-3.0, s, nullptr) == -1.0);
        CHECK(normalize_value(5.0, s, nullptr) == 1.0);
    }
    SUBCASE("round trip") {
        Rng rng(2);
        double max_err = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double v = -3.0 + 8.0 * rng.uniform();
            const double back = denormalize_value(normalize_value(v, s, nullptr), s);
            max_err = std::max(max_err, std::fabs(back - v));
        }
        CHECK(max_err < 1e-12);
    }
    SUBCASE("out-of-range clips with a warning") {
        std::uint64_t warn = 0;
        CHECK(normalize_value(9.0, s, &warn) == 1.0);
        CHECK(normalize_value(-7.0, s, &warn) == -1.0);
        CHECK(warn == 2);
    }
    SUBCASE("degenerate stats") {
        NormStats bad{2.0, 2.0};
        CHECK_THROWS_AS(normalize_value(1.0, bad, nullptr), std::invalid_argument);
    }
}

TEST_CASE("generate_storm") {
    SUBCASE("frozen dynamics give identical frames") {
        SynthStormParams p;
        p.seed = 5;
        p.drift_vx = 0.0;
        p.drift_vy = 0.0;
        p.random_walk_scale = 0.0;
        p.swirl_strength = 0.0;
        p.noise_level = 0.0;
        p.intensity_curve.assign(12, 0.8);
        auto seq = generate_storm(p, 12);
        const auto& first = seq.ir[0].values;
        for (int f = 1; f < 12; ++f)
            for (std::size_t i = 0; i < first.size(); ++i)
                CHECK(seq.ir[f].values[i] == first[i]);
    }
    SUBCASE("bit-identical across runs") {
        SynthStormParams p;
        p.seed = 77;
        auto a = generate_storm(p, 15);
        auto b = generate_storm(p, 15);
        for (int f = 0; f < 15; ++f)
            CHECK(std::memcmp(a.ir[f].values.data(), b.ir[f].values.data(),
                              a.ir[f].values.size() * 8) == 0);
        CHECK(std::memcmp(a.era5.data(), b.era5.data(), a.era5.size() * 8) == 0);
    }
    SUBCASE("pressure-depth argmax follows the track within a pixel") {
        SynthStormParams p;
        p.seed = 13;
        const int n = 30;
        auto seq = generate_storm(p, n);
        const int h = p.height, w = p.width;
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        for (int s = 0; s < n; ++s) {
            const double* depth = seq.era5.data() + (static_cast<std::size_t>(s) * 3 + 2) * hw;
            std::size_t best = 0;
            for (std::size_t i = 1; i < hw; ++i)
                if (depth[i] > depth[best]) best = i;
            const double by = static_cast<double>(best / w), bx = static_cast<double>(best % w);
            CHECK(std::fabs(bx - seq.center_x[s]) <= 1.0);
            CHECK(std::fabs(by - seq.center_y[s]) <= 1.0);
        }
    }
    SUBCASE("vortex-disk intensity is monotone in the configured curve") {
        SynthStormParams p;
        p.seed = 29;
        p.noise_level = 0.02;
        p.random_walk_scale = 0.05;
        const int n = 50;
        p.intensity_curve.resize(n);
        for (int i = 0; i < n; ++i)
            p.intensity_curve[i] = 0.3 + 0.65 * (0.5 + 0.5 * std::sin(0.4 * i));
        auto seq = generate_storm(p, n);
        std::vector<double> disk_mean(n, 0.0);
        const int h = p.height, w = p.width;
        for (int s = 0; s < n; ++s) {
            double acc = 0.0;
            int cnt = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double dx = x - seq.center_x[s], dy = y - seq.center_y[s];
                    if (dx * dx + dy * dy <= p.vortex_radius * p.vortex_radius) {
                        acc += seq.ir[s].values[y * w + x];
                        ++cnt;
                    }
                }
            disk_mean[s] = acc / cnt;
        }
        CHECK(spearman(disk_mean, seq.intensity) > 0.95);
    }
    SUBCASE("num_steps below 10 rejected") {
        SynthStormParams p;
        CHECK_THROWS_AS(generate_storm(p, 9), std::invalid_argument);
    }
}

TEST_CASE("clip file round trip") {
    SynthStormParams p;
    p.seed = 3;
    auto seq = generate_storm(p, 15);

    DatasetSpec spec;
    spec.steps_per_storm = 15;
    ClipRecord rec;
    rec.storm_seed = 3;
    rec.window_start = 1;
    rec.clip.frames = Tensor({10, 64, 64});
    rec.clip.mask = Tensor({64, 64});
    rec.clip.mask.fill(1.0);
    rec.clip.mask[100] = 0.0;
    rec.clip.timestamps.resize(10);
    for (int f = 0; f < 10; ++f) rec.clip.timestamps[f] = f;
    rec.cond_frame = Tensor({64, 64});
    rec.cond_era5 = Tensor({3, 3, 64, 64});
    Rng rng(1);
    for (std::size_t i = 0; i < rec.clip.frames.size(); ++i)
        rec.clip.frames[i] = std::clamp(rng.gaussian() * 0.3, -1.0, 1.0);
    for (std::size_t i = 0; i < rec.cond_frame.size(); ++i)
        rec.cond_frame[i] = std::clamp(rng.gaussian() * 0.3, -1.0, 1.0);
    for (std::size_t i = 0; i < rec.cond_era5.size(); ++i)
        rec.cond_era5[i] = std::clamp(rng.gaussian() * 0.3, -1.0, 1.0);

    const auto dir = temp_dir("clipio");
    write_clip(dir / "c.bin", rec);
    ClipRecord back = read_clip(dir / "c.bin");
    CHECK(back.storm_seed == rec.storm_seed);
    CHECK(back.window_start == rec.window_start);
    REQUIRE(back.clip.frames.shape() == rec.clip.frames.shape());
    // Storage is f32, so round-tripped values match to float precision.
    for (std::size_t i = 0; i < rec.clip.frames.size(); ++i)
        CHECK(back.clip.frames[i] == doctest::Approx(rec.clip.frames[i]).epsilon(1e-7));
    CHECK(back.clip.mask[100] == 0.0);
    CHECK(back.clip.mask[101] == 1.0);

    // Writing the loaded record again is byte-identical.
    write_clip(dir / "c2.bin", back);
    CHECK(slurp(dir / "c.bin") == slurp(dir / "c2.bin"));
    fs::remove_all(dir);
}

namespace {

DatasetSpec small_spec(const fs::path& dir) {
    DatasetSpec spec;
    spec.dir = dir;
    spec.train_storms = 6;
    spec.test_storms = 2;
    spec.steps_per_storm = 25;  // windows at 1 and 11 -> 2 clips per storm
    spec.height = 32;
    spec.width = 32;
    return spec;
}

}  // namespace

TEST_CASE("build_dataset") {
    SUBCASE("deterministic bytes and no-op rebuild") {
        const auto d1 = temp_dir("ds1");
        const auto d2 = temp_dir("ds2");
        CHECK(build_dataset(small_spec(d1)));
        CHECK(build_dataset(small_spec(d2)));
        CHECK_FALSE(build_dataset(small_spec(d1)));  // exists -> no-op

        const Manifest m1 = read_manifest(d1);
        const Manifest m2 = read_manifest(d2);
        REQUIRE(m1.entries.size() == m2.entries.size());
        CHECK(slurp(d1 / "manifest.txt") == slurp(d2 / "manifest.txt"));
        for (const auto& e : m1.entries) CHECK(slurp(d1 / e.file) == slurp(d2 / e.file));

        // Persisted invariants: values in [-1, 1], invalid pixels zero.
        std::size_t n_train = 0, n_test = 0;
        for (const auto& e : m1.entries) {
            (e.split == "train" ? n_train : n_test) += 1;
            ClipRecord rec = read_clip(d1 / e.file);
            for (std::size_t i = 0; i < rec.clip.frames.size(); ++i) {
                CHECK(rec.clip.frames[i] >= -1.0);
                CHECK(rec.clip.frames[i] <= 1.0);
            }
            const std::size_t hw = rec.clip.mask.size();
            for (std::size_t i = 0; i < hw; ++i)
                if (rec.clip.mask[i] == 0.0)
                    for (std::int64_t f = 0; f < rec.clip.length(); ++f)
                        CHECK(rec.clip.frames[f * hw + i] == 0.0);
        }
        // 6/2 storms, same windows each: ratio 3.0 (the default 60/18 spec
        // preserves ~1092/335 = 3.26 the same way).
        CHECK(static_cast<double>(n_train) / n_test >= 3.0);
        CHECK(static_cast<double>(n_train) / n_test <= 4.0);
        DatasetSpec defaults;
        CHECK(defaults.train_storms == 60);
        CHECK(defaults.test_storms == 18);
        const double default_ratio = 60.0 / 18.0;
        CHECK(default_ratio >= 3.0);
        CHECK(default_ratio <= 4.0);

        fs::remove_all(d1);
        fs::remove_all(d2);
    }
    SUBCASE("seed collision across splits is a hard error") {
        auto spec = small_spec(temp_dir("ds3"));
        spec.test_seed_base = spec.train_seed_base + 2;  // overlaps
        CHECK_THROWS_AS(build_dataset(spec), std::invalid_argument);
        fs::remove_all(spec.dir);
    }
    SUBCASE("load_split returns records with conditioning attached") {
        const auto d = temp_dir("ds4");
        build_dataset(small_spec(d));
        const Manifest m = read_manifest(d);
        auto train = load_split(m, "train");
        REQUIRE(train.size() == 12);
        CHECK(train[0].clip.length() == 10);
        CHECK(train[0].cond_era5.dim(0) == 3);
        CHECK(train[0].cond_era5.dim(1) == 3);
        CHECK_THROWS(load_split(m, "validation"));
        fs::remove_all(d);
    }
}
