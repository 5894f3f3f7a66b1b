#include "cyclocast/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cyclocast/kern/kernels.hpp"
#include "cyclocast/net/checkpoint.hpp"

namespace cyclocast::train {

std::string to_string(Stage s) {
    return s == Stage::single_frame ? "single_frame" : "multi_frame";
}

void StageConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");
    if (cond_dropout_prob < 0.0 || cond_dropout_prob >= 1.0)
        throw std::invalid_argument("train: cond_dropout_prob must be in [0, 1)");
}

double masked_eps_loss(const Tensor& eps_true, const Tensor& eps_pred, const Tensor& mask) {
    eps_true.require_shape(eps_pred, "masked_eps_loss");
    const std::size_t hw = mask.size();
    if (hw == 0 || eps_true.size() % hw != 0)
        throw std::invalid_argument("masked_eps_loss: mask/tensor size mismatch");
    std::size_t valid = 0;
    for (std::size_t i = 0; i < hw; ++i)
        if (mask[i] != 0.0) ++valid;
    if (valid == 0) throw std::invalid_argument("masked_eps_loss: all-invalid mask");

    const std::size_t planes = eps_true.size() / hw;
    double acc = 0.0;
    for (std::size_t p = 0; p < planes; ++p) {
        const double* a = eps_true.data() + p * hw;
        const double* b = eps_pred.data() + p * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (mask[i] != 0.0) {
                const double d = a[i] - b[i];
                acc += d * d;
            }
    }
    return acc / (static_cast<double>(valid) * static_cast<double>(planes));
}

Tensor masked_eps_loss_grad(const Tensor& eps_true, const Tensor& eps_pred, const Tensor& mask) {
    eps_true.require_shape(eps_pred, "masked_eps_loss_grad");
    const std::size_t hw = mask.size();
    std::size_t valid = 0;
    for (std::size_t i = 0; i < hw; ++i)
        if (mask[i] != 0.0) ++valid;
    if (valid == 0) throw std::invalid_argument("masked_eps_loss_grad: all-invalid mask");

    const std::size_t planes = eps_true.size() / hw;
    const double scale = 2.0 / (static_cast<double>(valid) * static_cast<double>(planes));
    Tensor g(eps_pred.shape());
    for (std::size_t p = 0; p < planes; ++p) {
        const double* a = eps_true.data() + p * hw;
        const double* b = eps_pred.data() + p * hw;
        double* gp = g.data() + p * hw;
        for (std::size_t i = 0; i < hw; ++i)
            gp[i] = mask[i] != 0.0 ? scale * (b[i] - a[i]) : 0.0;
    }
    return g;
}

Adam::Adam(const net::ParamRefs& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const net::Param* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto& k = kern::active();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        net::Param* p = params_[i];
        k.adam_step(p->value.data(), m_[i].data(), v_[i].data(), p->grad.data(), lr_, beta1_,
                    beta2_, bc1, bc2, eps_, p->value.size());
    }
}

namespace {

struct Example {
    std::size_t clip_index;
    int frame_index;  // -1 for whole-clip examples
};

// Training view of one example: target frames plus conditioning, with the
// mask contract re-applied (invalid pixels cannot influence anything).
struct Prepared {
    Tensor x0;  // (T, 1, H, W)
    net::ConditioningBundle bundle;
};

Prepared prepare(const data::ClipRecord& rec, int frame_index) {
    const std::int64_t T = rec.clip.length(), H = rec.clip.height(), W = rec.clip.width();
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    Prepared out;
    if (frame_index < 0) {
        out.x0 = Tensor({T, 1, H, W});
        std::copy_n(rec.clip.frames.data(), out.x0.size(), out.x0.data());
    } else {
        out.x0 = Tensor({1, 1, H, W});
        std::copy_n(rec.clip.frames.data() + frame_index * hw, hw, out.x0.data());
    }
    diffusion::apply_mask(out.x0, rec.clip.mask);
    out.bundle = net::make_bundle(rec.cond_frame, rec.cond_era5, rec.clip.mask);
    return out;
}

}  // namespace

TrainReport train_stage(net::Denoiser& model, const std::vector<data::ClipRecord>& dataset,
                        const diffusion::NoiseSchedule& sched, const StageConfig& cfg,
                        std::uint64_t start_step) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_stage: empty dataset");
    const int T_clip = static_cast<int>(dataset[0].clip.length());
    if (cfg.stage == Stage::multi_frame && T_clip != model.config().max_frames)
        throw std::invalid_argument("train_stage: clip length does not match model max_frames");

    // Single-frame stage decomposes each clip into one example per target
    // frame, all sharing the clip's conditioning.
    std::vector<Example> examples;
    for (std::size_t ci = 0; ci < dataset.size(); ++ci) {
        if (cfg.stage == Stage::single_frame)
            for (int f = 0; f < T_clip; ++f) examples.push_back({ci, f});
        else
            examples.push_back({ci, -1});
    }

    const std::size_t steps_per_epoch =
        (examples.size() + cfg.batch_size - 1) / static_cast<std::size_t>(cfg.batch_size);

    net::ParamRefs params = model.params();
    Adam opt(params, cfg.learning_rate);
    Rng master(cfg.seed);

    TrainReport report;
    report.stage_tag = to_string(cfg.stage);

    std::uint64_t step = start_step;
    const std::uint64_t start_epoch = start_step / steps_per_epoch;
    for (std::uint64_t epoch = start_epoch;
         epoch < start_epoch + static_cast<std::uint64_t>(cfg.epochs); ++epoch) {
        const auto tic = std::chrono::steady_clock::now();

        std::vector<std::size_t> order(examples.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = master.fork(0xe70c0000ULL + epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_below(i)]);

        double epoch_acc = 0.0;
        std::size_t epoch_steps = 0;
        std::size_t cursor = (step % steps_per_epoch) * cfg.batch_size;
        for (; cursor < examples.size(); ++step, ++epoch_steps) {
            Rng step_rng = master.fork(0x57e90000ULL ^ (step * 0x9e3779b97f4a7c15ULL));

            net::zero_grads(params);
            double batch_loss = 0.0;
            int batch_n = 0;
            for (int b = 0; b < cfg.batch_size && cursor < examples.size(); ++b, ++cursor) {
                const Example& ex = examples[order[cursor]];
                const data::ClipRecord& rec = dataset[ex.clip_index];
                Prepared prep = prepare(rec, ex.frame_index);

                const int t = static_cast<int>(step_rng.uniform_below(sched.num_steps));
                const bool drop = step_rng.uniform() < cfg.cond_dropout_prob;
                ++report.total_examples;
                if (drop) ++report.null_cond_examples;
                Tensor noise(prep.x0.shape());
                step_rng.fill_gaussian(noise.data(), noise.size());

                Tensor z = diffusion::q_sample(prep.x0, t, noise, sched);
                diffusion::apply_mask(z, rec.clip.mask);

                net::ConditioningBundle dropped;
                if (drop) dropped = net::null_bundle(prep.bundle);
                const net::ConditioningBundle& bundle = drop ? dropped : prep.bundle;
                Tensor eps_hat = model.forward(z, t, sched.lambda[t], bundle);

                const double loss = masked_eps_loss(noise, eps_hat, rec.clip.mask);
                if (!std::isfinite(loss))
                    throw std::runtime_error("train_stage: non-finite loss at step " +
                                             std::to_string(step));
                batch_loss += loss;
                ++batch_n;

                Tensor g = masked_eps_loss_grad(noise, eps_hat, rec.clip.mask);
                if (cfg.batch_size > 1)
                    kern::active().scale(g.data(), g.data(), 1.0 / cfg.batch_size, g.size());
                model.backward(g);
            }

            if (cfg.grad_clip_norm > 0.0) {
                const double norm = net::global_grad_norm(params);
                if (norm > cfg.grad_clip_norm)
                    net::scale_grads(params, cfg.grad_clip_norm / norm);
            }
            opt.step();
            epoch_acc += batch_loss / batch_n;
        }

        const auto toc = std::chrono::steady_clock::now();
        report.epoch_loss.push_back(epoch_acc / static_cast<double>(epoch_steps));
        report.epoch_seconds.push_back(std::chrono::duration<double>(toc - tic).count());
    }
    report.final_step = step;
    return report;
}

std::pair<TrainReport, TrainReport> two_stage_train(
    net::Denoiser& model, const std::vector<data::ClipRecord>& dataset,
    const diffusion::NoiseSchedule& sched, const StageConfig& stage1, const StageConfig& stage2,
    const std::filesystem::path& out_dir) {
    if (stage1.stage != Stage::single_frame || stage2.stage != Stage::multi_frame)
        throw std::invalid_argument("two_stage_train: stage order must be single_frame then multi_frame");

    TrainReport r1;
    r1.stage_tag = to_string(stage1.stage);
    if (stage1.epochs > 0) r1 = train_stage(model, dataset, sched, stage1);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto path = out_dir / "checkpoint_stage1.bin";
        net::CheckpointMeta meta{to_string(stage1.stage), stage1.seed, r1.final_step,
                                 static_cast<std::uint64_t>(stage1.epochs)};
        net::save_checkpoint(path, model, meta);
        r1.checkpoint_path = path.string();
    }

    TrainReport r2 = train_stage(model, dataset, sched, stage2);
    if (!out_dir.empty()) {
        const auto path = out_dir / "checkpoint_stage2.bin";
        net::CheckpointMeta meta{to_string(stage2.stage), stage2.seed, r2.final_step,
                                 static_cast<std::uint64_t>(stage2.epochs)};
        net::save_checkpoint(path, model, meta);
        r2.checkpoint_path = path.string();
    }
    return {std::move(r1), std::move(r2)};
}

}  // namespace cyclocast::train
