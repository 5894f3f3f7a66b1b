#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cyclocast/data/dataset.hpp"
#include "cyclocast/diffusion/diffusion.hpp"
#include "cyclocast/net/denoiser.hpp"

namespace cyclocast::train {

enum class Stage { single_frame, multi_frame };

std::string to_string(Stage s);

struct StageConfig {
    Stage stage = Stage::multi_frame;
    int epochs = 1;
    int batch_size = 1;
    double learning_rate = 3e-4;
    double cond_dropout_prob = 0.1;  // classifier-free guidance dropout
    std::uint64_t seed = 0;
    double grad_clip_norm = 1.0;     // global-norm clip; <= 0 disables

    void validate() const;
};

struct TrainReport {
    std::string stage_tag;
    std::vector<double> epoch_loss;     // mean masked loss per epoch
    std::vector<double> epoch_seconds;  // wall clock per epoch
    std::string checkpoint_path;
    std::uint64_t final_step = 0;
    std::uint64_t total_examples = 0;
    std::uint64_t null_cond_examples = 0;  // guidance-dropout hits
};

// Mean of (eps_true - eps_pred)^2 over valid pixels of all frames; invalid
// pixels contribute exactly zero. Throws on shape mismatch or an all-invalid
// mask.
double masked_eps_loss(const Tensor& eps_true, const Tensor& eps_pred, const Tensor& mask);

// dLoss/dEps_pred for the loss above: 2 (pred - true) / n_valid_total at
// valid pixels, zero elsewhere.
Tensor masked_eps_loss_grad(const Tensor& eps_true, const Tensor& eps_pred, const Tensor& mask);

// Adam with bias correction; state is owned here, one slot per parameter.
class Adam {
public:
    explicit Adam(const net::ParamRefs& params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);
    void step();

private:
    net::ParamRefs params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

// One curriculum stage. Per step: pick the next example of the (seeded)
// epoch shuffle, draw a uniform timestep and Gaussian noise, drop the
// conditioning to the null bundle with cond_dropout_prob, minimize the
// masked eps loss. All randomness is keyed off (seed, step index), so a
// resumed run continues the exact stream. Aborts on a non-finite loss.
TrainReport train_stage(net::Denoiser& model, const std::vector<data::ClipRecord>& dataset,
                        const diffusion::NoiseSchedule& sched, const StageConfig& cfg,
                        std::uint64_t start_step = 0);

// Stage 1 (single-frame) then stage 2 (multi-frame) from the stage-1
// weights; a checkpoint is written after each stage when out_dir is
// non-empty. With stage1.epochs == 0 this is exactly train_stage(stage2).
std::pair<TrainReport, TrainReport> two_stage_train(
    net::Denoiser& model, const std::vector<data::ClipRecord>& dataset,
    const diffusion::NoiseSchedule& sched, const StageConfig& stage1, const StageConfig& stage2,
    const std::filesystem::path& out_dir = {});

}  // namespace cyclocast::train
