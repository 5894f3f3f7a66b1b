#include "cyclocast/io/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cyclocast::io {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const std::set<std::string> kKnownKeys = {
    "dataset.dir", "dataset.train_storms", "dataset.test_storms", "dataset.steps_per_storm",
    "dataset.clip_len", "dataset.stride", "dataset.cond_timesteps", "dataset.era5_channels",
    "dataset.height", "dataset.width", "dataset.train_seed_base", "dataset.test_seed_base",
    "dataset.noise_level",
    "model.base_channels", "model.channel_multipliers", "model.temporal_attention_heads",
    "model.embed_dim", "model.max_frames",
    "schedule.kind", "schedule.num_steps",
    "guidance.scale", "guidance.dynamic_threshold_percentile", "guidance.clamp_floor",
    "stage1.epochs", "stage1.batch_size", "stage1.learning_rate", "stage1.cond_dropout_prob",
    "stage1.grad_clip_norm",
    "stage2.epochs", "stage2.batch_size", "stage2.learning_rate", "stage2.cond_dropout_prob",
    "stage2.grad_clip_norm",
    "metrics.extractor_seed", "metrics.frame_feature_dim", "metrics.clip_feature_dim",
    "rollout.horizon_hours", "rollout.drop_window", "rollout.drop_threshold",
    "eval.max_clips", "eval.sample_steps",
    "run.seed", "run.out_dir",
};

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
    ConfigFile cf;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) + ": key outside section");
        if (!kKnownKeys.count(section + "." + key))
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" +
                                     section + "." + key + "'");
        cf.sections_[section][key] = value;
    }
    return cf;
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

long long ConfigFile::get_int(const std::string& section, const std::string& key,
                              long long fallback) const {
    if (!has(section, key)) return fallback;
    return std::stoll(get(section, key, ""));
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    if (!has(section, key)) return fallback;
    return std::stod(get(section, key, ""));
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(trim(item)));
    return out;
}

std::string int_list_str(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace

RunConfig RunConfig::from_config(const ConfigFile& cf) {
    RunConfig rc;
    rc.dataset.dir = cf.get("dataset", "dir", "data/default");
    rc.dataset.train_storms = static_cast<int>(cf.get_int("dataset", "train_storms", rc.dataset.train_storms));
    rc.dataset.test_storms = static_cast<int>(cf.get_int("dataset", "test_storms", rc.dataset.test_storms));
    rc.dataset.steps_per_storm = static_cast<int>(cf.get_int("dataset", "steps_per_storm", rc.dataset.steps_per_storm));
    rc.dataset.clip_len = static_cast<int>(cf.get_int("dataset", "clip_len", rc.dataset.clip_len));
    rc.dataset.stride = static_cast<int>(cf.get_int("dataset", "stride", rc.dataset.stride));
    rc.dataset.cond_timesteps = static_cast<int>(cf.get_int("dataset", "cond_timesteps", rc.dataset.cond_timesteps));
    rc.dataset.era5_channels = static_cast<int>(cf.get_int("dataset", "era5_channels", rc.dataset.era5_channels));
    rc.dataset.height = static_cast<int>(cf.get_int("dataset", "height", rc.dataset.height));
    rc.dataset.width = static_cast<int>(cf.get_int("dataset", "width", rc.dataset.width));
    rc.dataset.train_seed_base = static_cast<std::uint64_t>(cf.get_int("dataset", "train_seed_base", rc.dataset.train_seed_base));
    rc.dataset.test_seed_base = static_cast<std::uint64_t>(cf.get_int("dataset", "test_seed_base", rc.dataset.test_seed_base));
    rc.dataset.noise_level = cf.get_double("dataset", "noise_level", rc.dataset.noise_level);

    rc.model.base_channels = static_cast<int>(cf.get_int("model", "base_channels", rc.model.base_channels));
    rc.model.channel_multipliers = parse_int_list(cf.get("model", "channel_multipliers", int_list_str(rc.model.channel_multipliers)));
    rc.model.temporal_attention_heads = static_cast<int>(cf.get_int("model", "temporal_attention_heads", rc.model.temporal_attention_heads));
    rc.model.embed_dim = static_cast<int>(cf.get_int("model", "embed_dim", rc.model.embed_dim));
    rc.model.max_frames = static_cast<int>(cf.get_int("model", "max_frames", rc.model.max_frames));
    rc.model.cond_channels = rc.dataset.era5_channels;
    rc.model.cond_timesteps = rc.dataset.cond_timesteps;
    rc.model.resolution = rc.dataset.height;

    rc.schedule_kind = diffusion::schedule_kind_from_string(cf.get("schedule", "kind", "cosine"));
    rc.schedule_steps = static_cast<int>(cf.get_int("schedule", "num_steps", rc.schedule_steps));

    rc.guidance.scale = cf.get_double("guidance", "scale", rc.guidance.scale);
    rc.guidance.dynamic_threshold_percentile =
        cf.get_double("guidance", "dynamic_threshold_percentile", rc.guidance.dynamic_threshold_percentile);
    rc.guidance.clamp_floor = cf.get_double("guidance", "clamp_floor", rc.guidance.clamp_floor);

    rc.stage1.stage = train::Stage::single_frame;
    rc.stage1.epochs = static_cast<int>(cf.get_int("stage1", "epochs", 20));
    rc.stage1.batch_size = static_cast<int>(cf.get_int("stage1", "batch_size", 1));
    rc.stage1.learning_rate = cf.get_double("stage1", "learning_rate", 3e-4);
    rc.stage1.cond_dropout_prob = cf.get_double("stage1", "cond_dropout_prob", 0.1);
    rc.stage1.grad_clip_norm = cf.get_double("stage1", "grad_clip_norm", 1.0);

    rc.stage2.stage = train::Stage::multi_frame;
    rc.stage2.epochs = static_cast<int>(cf.get_int("stage2", "epochs", 60));
    rc.stage2.batch_size = static_cast<int>(cf.get_int("stage2", "batch_size", 1));
    rc.stage2.learning_rate = cf.get_double("stage2", "learning_rate", 3e-4);
    rc.stage2.cond_dropout_prob = cf.get_double("stage2", "cond_dropout_prob", 0.1);
    rc.stage2.grad_clip_norm = cf.get_double("stage2", "grad_clip_norm", 1.0);

    rc.extractor.seed = static_cast<std::uint64_t>(cf.get_int("metrics", "extractor_seed", 7));
    rc.extractor.frame_feature_dim = static_cast<int>(cf.get_int("metrics", "frame_feature_dim", 64));
    rc.extractor.clip_feature_dim = static_cast<int>(cf.get_int("metrics", "clip_feature_dim", 128));

    rc.rollout.horizon_hours = static_cast<int>(cf.get_int("rollout", "horizon_hours", 50));
    rc.rollout.drop_window = static_cast<int>(cf.get_int("rollout", "drop_window", 5));
    rc.rollout.drop_threshold = cf.get_double("rollout", "drop_threshold", 0.03);

    rc.eval.max_clips = static_cast<int>(cf.get_int("eval", "max_clips", 0));
    rc.eval.sample_steps = static_cast<int>(cf.get_int("eval", "sample_steps", 0));

    rc.seed = static_cast<std::uint64_t>(cf.get_int("run", "seed", 1));
    rc.out_dir = cf.get("run", "out_dir", "runs/default");

    // The trainer seeds derive from the run seed unless given explicitly.
    rc.stage1.seed = rc.seed;
    rc.stage2.seed = rc.seed + 1;

    rc.model.validate();
    rc.guidance.validate();
    return rc;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    return from_config(ConfigFile::parse_file(path));
}

std::string RunConfig::resolved_text() const {
    std::ostringstream o;
    o.precision(17);
    o << "[dataset]\n";
    o << "dir = " << dataset.dir.string() << "\n";
    o << "train_storms = " << dataset.train_storms << "\n";
    o << "test_storms = " << dataset.test_storms << "\n";
    o << "steps_per_storm = " << dataset.steps_per_storm << "\n";
    o << "clip_len = " << dataset.clip_len << "\n";
    o << "stride = " << dataset.stride << "\n";
    o << "cond_timesteps = " << dataset.cond_timesteps << "\n";
    o << "era5_channels = " << dataset.era5_channels << "\n";
    o << "height = " << dataset.height << "\n";
    o << "width = " << dataset.width << "\n";
    o << "train_seed_base = " << dataset.train_seed_base << "\n";
    o << "test_seed_base = " << dataset.test_seed_base << "\n";
    o << "noise_level = " << dataset.noise_level << "\n";
    o << "\n[model]\n";
    o << "base_channels = " << model.base_channels << "\n";
    o << "channel_multipliers = " << int_list_str(model.channel_multipliers) << "\n";
    o << "temporal_attention_heads = " << model.temporal_attention_heads << "\n";
    o << "embed_dim = " << model.embed_dim << "\n";
    o << "max_frames = " << model.max_frames << "\n";
    o << "\n[schedule]\n";
    o << "kind = " << diffusion::to_string(schedule_kind) << "\n";
    o << "num_steps = " << schedule_steps << "\n";
    o << "\n[guidance]\n";
    o << "scale = " << guidance.scale << "\n";
    o << "dynamic_threshold_percentile = " << guidance.dynamic_threshold_percentile << "\n";
    o << "clamp_floor = " << guidance.clamp_floor << "\n";
    o << "\n[stage1]\n";
    o << "epochs = " << stage1.epochs << "\n";
    o << "batch_size = " << stage1.batch_size << "\n";
    o << "learning_rate = " << stage1.learning_rate << "\n";
    o << "cond_dropout_prob = " << stage1.cond_dropout_prob << "\n";
    o << "grad_clip_norm = " << stage1.grad_clip_norm << "\n";
    o << "\n[stage2]\n";
    o << "epochs = " << stage2.epochs << "\n";
    o << "batch_size = " << stage2.batch_size << "\n";
    o << "learning_rate = " << stage2.learning_rate << "\n";
    o << "cond_dropout_prob = " << stage2.cond_dropout_prob << "\n";
    o << "grad_clip_norm = " << stage2.grad_clip_norm << "\n";
    o << "\n[metrics]\n";
    o << "extractor_seed = " << extractor.seed << "\n";
    o << "frame_feature_dim = " << extractor.frame_feature_dim << "\n";
    o << "clip_feature_dim = " << extractor.clip_feature_dim << "\n";
    o << "\n[rollout]\n";
    o << "horizon_hours = " << rollout.horizon_hours << "\n";
    o << "drop_window = " << rollout.drop_window << "\n";
    o << "drop_threshold = " << rollout.drop_threshold << "\n";
    o << "\n[eval]\n";
    o << "max_clips = " << eval.max_clips << "\n";
    o << "sample_steps = " << eval.sample_steps << "\n";
    o << "\n[run]\n";
    o << "seed = " << seed << "\n";
    o << "out_dir = " << out_dir.string() << "\n";
    return o.str();
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write resolved config: " + tmp.string());
        out << resolved_text();
    }
    std::filesystem::rename(tmp, path);
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
    if (preset == "full") {       // 100/300 scaled by 1/5
        cfg.stage1.epochs = 20;
        cfg.stage2.epochs = 60;
    } else if (preset == "lowdata") {  // 200/200 scaled by 1/5
        cfg.stage1.epochs = 40;
        cfg.stage2.epochs = 40;
    } else {
        throw std::invalid_argument("unknown preset '" + preset + "' (use full or lowdata)");
    }
}

}  // namespace cyclocast::io
