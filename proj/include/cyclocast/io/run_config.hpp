#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cyclocast/data/dataset.hpp"
#include "cyclocast/diffusion/diffusion.hpp"
#include "cyclocast/metrics/metrics.hpp"
#include "cyclocast/net/denoiser.hpp"
#include "cyclocast/train/trainer.hpp"

namespace cyclocast::io {

// Sectioned key = value configuration file:
//   [section]
//   key = value        # comment
// Unknown keys are errors so typos fail loudly.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::filesystem::path& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct RolloutOptions {
    int horizon_hours = 50;
    int drop_window = 5;
    double drop_threshold = 0.03;
};

struct EvalOptions {
    int max_clips = 0;       // 0 = all test clips
    int sample_steps = 0;    // 0 = schedule num_steps
};

// Everything one run needs; every field has a default so a minimal config
// file works. A resolved copy (all defaults expanded) is written into the
// output directory of each CLI run.
struct RunConfig {
    data::DatasetSpec dataset;
    net::DenoiserConfig model;
    diffusion::ScheduleKind schedule_kind = diffusion::ScheduleKind::cosine;
    int schedule_steps = 200;
    diffusion::GuidanceConfig guidance;
    train::StageConfig stage1;
    train::StageConfig stage2;
    metrics::FeatureExtractorConfig extractor;
    RolloutOptions rollout;
    EvalOptions eval;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "runs/default";

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_config(const ConfigFile& cf);

    // Canonical serialization with all defaults expanded.
    std::string resolved_text() const;
    void write_resolved(const std::filesystem::path& path) const;
};

// Desk-scale presets mirroring the full-data (1:3) and low-data (1:1) epoch
// ratios at one fifth of the magnitudes.
void apply_preset(RunConfig& cfg, const std::string& preset);

}  // namespace cyclocast::io
