#include "cyclocast/data/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cyclocast::data {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'C', 'C', 'L', 'I', 'P', '0', '0', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw std::runtime_error(std::string("clip file truncated reading ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        std::uint64_t lo = u32(what), hi = u32(what);
        return lo | (hi << 32);
    }
    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

void write_clip(const fs::path& path, const ClipRecord& rec) {
    const auto T = rec.clip.frames.dim(0);
    const auto H = rec.clip.frames.dim(1);
    const auto W = rec.clip.frames.dim(2);
    const auto K = rec.cond_era5.dim(0);
    const auto C = rec.cond_era5.dim(1);

    std::string buf;
    buf.append(kMagic, 8);
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(T));
    put_u32(buf, static_cast<std::uint32_t>(H));
    put_u32(buf, static_cast<std::uint32_t>(W));
    put_u32(buf, static_cast<std::uint32_t>(C));
    put_u32(buf, static_cast<std::uint32_t>(K));
    put_u32(buf, static_cast<std::uint32_t>(rec.window_start));
    put_u64(buf, rec.storm_seed);
    for (auto t : rec.clip.timestamps) put_f32(buf, static_cast<float>(t));
    for (std::size_t i = 0; i < rec.cond_frame.size(); ++i)
        put_f32(buf, static_cast<float>(rec.cond_frame[i]));
    for (std::size_t i = 0; i < rec.cond_era5.size(); ++i)
        put_f32(buf, static_cast<float>(rec.cond_era5[i]));
    for (std::size_t i = 0; i < rec.clip.frames.size(); ++i)
        put_f32(buf, static_cast<float>(rec.clip.frames[i]));

    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < hw; i += 8) {
        unsigned char byte = 0;
        for (std::size_t b = 0; b < 8 && i + b < hw; ++b)
            if (rec.clip.mask[i + b] != 0.0) byte |= static_cast<unsigned char>(1u << b);
        buf.push_back(static_cast<char>(byte));
    }
    write_file_atomic(path, buf);
}

ClipRecord read_clip(const fs::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("bad clip magic: " + path.string());
    Reader r{bytes, 8};
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw std::runtime_error("unsupported clip version");
    const std::int64_t T = r.u32("T");
    const std::int64_t H = r.u32("H");
    const std::int64_t W = r.u32("W");
    const std::int64_t C = r.u32("C");
    const std::int64_t K = r.u32("K");

    ClipRecord rec;
    rec.window_start = static_cast<int>(r.u32("window_start"));
    rec.storm_seed = r.u64("storm_seed");
    rec.clip.timestamps.resize(T);
    for (auto& t : rec.clip.timestamps) t = r.f32("timestamps");
    rec.cond_frame = Tensor({H, W});
    for (std::size_t i = 0; i < rec.cond_frame.size(); ++i) rec.cond_frame[i] = r.f32("cond_frame");
    rec.cond_era5 = Tensor({K, C, H, W});
    for (std::size_t i = 0; i < rec.cond_era5.size(); ++i) rec.cond_era5[i] = r.f32("cond_era5");
    rec.clip.frames = Tensor({T, H, W});
    for (std::size_t i = 0; i < rec.clip.frames.size(); ++i) rec.clip.frames[i] = r.f32("targets");

    rec.clip.mask = Tensor({H, W});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    r.need((hw + 7) / 8, "mask");
    for (std::size_t i = 0; i < hw; ++i) {
        const unsigned char byte = static_cast<unsigned char>(bytes[r.pos + i / 8]);
        rec.clip.mask[i] = (byte >> (i % 8)) & 1u ? 1.0 : 0.0;
    }
    return rec;
}

SynthStormParams storm_params_for(const DatasetSpec& spec, std::uint64_t seed) {
    SynthStormParams p;
    p.seed = seed;
    p.height = spec.height;
    p.width = spec.width;
    p.era5_channels = spec.era5_channels;
    p.noise_level = spec.noise_level;
    return p;
}

namespace {

// Window starts begin at hour 1 so every window has an observed frame
// before it for conditioning.
std::vector<int> window_starts(const DatasetSpec& spec) {
    std::vector<int> starts;
    for (int s = 1; s + spec.clip_len <= spec.steps_per_storm &&
                    s + spec.cond_timesteps - 1 < spec.steps_per_storm;
         s += spec.stride)
        starts.push_back(s);
    return starts;
}

ClipRecord make_record(const DatasetSpec& spec, const StormSequence& seq,
                       std::uint64_t seed, int start, const DatasetStats& stats,
                       std::uint64_t* clip_warnings) {
    const int H = spec.height, W = spec.width, T = spec.clip_len;
    const int K = spec.cond_timesteps, C = spec.era5_channels;
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    ClipRecord rec;
    rec.storm_seed = seed;
    rec.window_start = start;

    rec.clip.frames = Tensor({T, H, W});
    rec.clip.mask = Tensor({H, W});
    rec.clip.mask.fill(1.0);
    rec.clip.timestamps.resize(T);
    for (int f = 0; f < T; ++f) {
        rec.clip.timestamps[f] = static_cast<double>(f);
        const FrameGrid& g = seq.ir[start + f];
        double* dst = rec.clip.frames.data() + static_cast<std::size_t>(f) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
            dst[i] = normalize_value(g.values[i], stats.ir, clip_warnings);
            if (g.mask[i] == 0.0) rec.clip.mask[i] = 0.0;
        }
    }

    const FrameGrid& prev = seq.ir[start - 1];
    rec.cond_frame = Tensor({H, W});
    for (std::size_t i = 0; i < hw; ++i) {
        rec.cond_frame[i] = normalize_value(prev.values[i], stats.ir, clip_warnings);
        if (prev.mask[i] == 0.0) rec.clip.mask[i] = 0.0;
    }

    rec.cond_era5 = Tensor({K, C, H, W});
    for (int k = 0; k < K; ++k) {
        const int hour = start - 1 + k;
        for (int c = 0; c < C; ++c) {
            const double* src = seq.era5.data() + (static_cast<std::size_t>(hour) * C + c) * hw;
            double* dst = rec.cond_era5.data() + (static_cast<std::size_t>(k) * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i)
                dst[i] = normalize_value(src[i], stats.era5[c], clip_warnings);
        }
    }

    // Enforce the mask contract on everything persisted.
    for (std::size_t i = 0; i < hw; ++i) {
        if (rec.clip.mask[i] != 0.0) continue;
        rec.cond_frame[i] = 0.0;
        for (int f = 0; f < T; ++f) rec.clip.frames[static_cast<std::size_t>(f) * hw + i] = 0.0;
        for (std::int64_t kc = 0; kc < static_cast<std::int64_t>(K) * C; ++kc)
            rec.cond_era5[static_cast<std::size_t>(kc) * hw + i] = 0.0;
    }
    return rec;
}

}  // namespace

bool build_dataset(const DatasetSpec& spec) {
    const fs::path manifest_path = spec.dir / "manifest.txt";
    if (fs::exists(manifest_path)) return false;

    // Split hygiene: seeds must not collide across splits.
    std::set<std::uint64_t> train_seeds, test_seeds;
    for (int i = 0; i < spec.train_storms; ++i) train_seeds.insert(spec.train_seed_base + i);
    for (int i = 0; i < spec.test_storms; ++i) test_seeds.insert(spec.test_seed_base + i);
    for (auto s : test_seeds)
        if (train_seeds.count(s))
            throw std::invalid_argument("build_dataset: seed " + std::to_string(s) +
                                        " appears in both splits");

    const auto starts = window_starts(spec);
    if (starts.empty())
        throw std::invalid_argument("build_dataset: steps_per_storm too small for one clip window");

    fs::create_directories(spec.dir / "train");
    fs::create_directories(spec.dir / "test");

    // Pass 1: train-split stats (global min/max of IR and each ERA5 channel).
    DatasetStats stats;
    stats.ir = {1e300, -1e300};
    stats.era5.assign(spec.era5_channels, NormStats{1e300, -1e300});
    std::vector<StormSequence> train_seqs;
    train_seqs.reserve(spec.train_storms);
    for (int i = 0; i < spec.train_storms; ++i) {
        StormSequence seq = generate_storm(storm_params_for(spec, spec.train_seed_base + i),
                                           spec.steps_per_storm);
        for (const auto& g : seq.ir)
            for (std::size_t j = 0; j < g.values.size(); ++j) {
                stats.ir.min = std::min(stats.ir.min, g.values[j]);
                stats.ir.max = std::max(stats.ir.max, g.values[j]);
            }
        const std::size_t hw = static_cast<std::size_t>(spec.height) * spec.width;
        for (int step = 0; step < spec.steps_per_storm; ++step)
            for (int c = 0; c < spec.era5_channels; ++c) {
                const double* p = seq.era5.data() + (static_cast<std::size_t>(step) * spec.era5_channels + c) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    stats.era5[c].min = std::min(stats.era5[c].min, p[j]);
                    stats.era5[c].max = std::max(stats.era5[c].max, p[j]);
                }
            }
        train_seqs.push_back(std::move(seq));
    }

    Manifest m;
    m.spec = spec;
    m.stats = stats;

    std::uint64_t clip_warnings = 0;
    int file_index = 0;
    auto emit = [&](const std::string& split, const StormSequence& seq, std::uint64_t seed) {
        for (int s : starts) {
            ClipRecord rec = make_record(spec, seq, seed, s, stats, &clip_warnings);
            char name[32];
            std::snprintf(name, sizeof(name), "clip_%04d.bin", file_index++);
            const std::string rel = split + "/" + name;
            write_clip(spec.dir / rel, rec);
            m.entries.push_back({split, seed, s, rel});
        }
    };

    for (int i = 0; i < spec.train_storms; ++i)
        emit("train", train_seqs[i], spec.train_seed_base + i);
    train_seqs.clear();
    for (int i = 0; i < spec.test_storms; ++i) {
        StormSequence seq = generate_storm(storm_params_for(spec, spec.test_seed_base + i),
                                           spec.steps_per_storm);
        emit("test", seq, spec.test_seed_base + i);
    }

    std::ostringstream out;
    out << "# cyclocast dataset manifest v1\n";
    out << "height " << spec.height << "\n";
    out << "width " << spec.width << "\n";
    out << "clip_len " << spec.clip_len << "\n";
    out << "stride " << spec.stride << "\n";
    out << "steps_per_storm " << spec.steps_per_storm << "\n";
    out << "cond_timesteps " << spec.cond_timesteps << "\n";
    out << "era5_channels " << spec.era5_channels << "\n";
    out << "train_storms " << spec.train_storms << "\n";
    out << "test_storms " << spec.test_storms << "\n";
    out << "train_seed_base " << spec.train_seed_base << "\n";
    out << "test_seed_base " << spec.test_seed_base << "\n";
    out << "noise_level " << format_double(spec.noise_level) << "\n";
    out << "clip_warnings " << clip_warnings << "\n";
    out << "stats ir " << format_double(stats.ir.min) << " " << format_double(stats.ir.max) << "\n";
    for (int c = 0; c < spec.era5_channels; ++c)
        out << "stats era5_" << c << " " << format_double(stats.era5[c].min) << " "
            << format_double(stats.era5[c].max) << "\n";
    for (const auto& e : m.entries)
        out << "clip " << e.split << " " << e.storm_seed << " " << e.window_start << " " << e.file
            << "\n";
    write_file_atomic(manifest_path, out.str());
    return true;
}

Manifest read_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.txt";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());

    Manifest m;
    m.spec.dir = dir;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "height") ss >> m.spec.height;
        else if (key == "width") ss >> m.spec.width;
        else if (key == "clip_len") ss >> m.spec.clip_len;
        else if (key == "stride") ss >> m.spec.stride;
        else if (key == "steps_per_storm") ss >> m.spec.steps_per_storm;
        else if (key == "cond_timesteps") ss >> m.spec.cond_timesteps;
        else if (key == "era5_channels") ss >> m.spec.era5_channels;
        else if (key == "train_storms") ss >> m.spec.train_storms;
        else if (key == "test_storms") ss >> m.spec.test_storms;
        else if (key == "train_seed_base") ss >> m.spec.train_seed_base;
        else if (key == "test_seed_base") ss >> m.spec.test_seed_base;
        else if (key == "noise_level") ss >> m.spec.noise_level;
        else if (key == "clip_warnings") { std::uint64_t ignored; ss >> ignored; }
        else if (key == "stats") {
            std::string which;
            ss >> which;
            NormStats s;
            ss >> s.min >> s.max;
            if (which == "ir") m.stats.ir = s;
            else {
                const int c = std::stoi(which.substr(5));
                if (static_cast<int>(m.stats.era5.size()) <= c) m.stats.era5.resize(c + 1);
                m.stats.era5[c] = s;
            }
        } else if (key == "clip") {
            Manifest::Entry e;
            ss >> e.split >> e.storm_seed >> e.window_start >> e.file;
            m.entries.push_back(e);
        } else {
            throw std::runtime_error("manifest: unknown key '" + key + "'");
        }
    }
    return m;
}

std::vector<ClipRecord> load_split(const Manifest& m, const std::string& split) {
    std::vector<ClipRecord> out;
    for (const auto& e : m.entries)
        if (e.split == split) out.push_back(read_clip(m.spec.dir / e.file));
    if (out.empty()) throw std::runtime_error("load_split: no '" + split + "' clips in manifest");
    return out;
}

}  // namespace cyclocast::data
