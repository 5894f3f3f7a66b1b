#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cyclocast/core/tensor.hpp"
#include "cyclocast/net/nn.hpp"

namespace cyclocast::net {

// Conditioning for one generated clip: the last observed IR frame plus the
// meteorology-like slices around it. The mask is a validity grid, not a
// conditioning signal; null bundles keep it.
struct ConditioningBundle {
    Tensor initial_frame;  // (H, W), values in [-1, 1], invalid pixels 0
    Tensor era5_stack;     // (K, C, H, W), normalized, invalid pixels 0
    Tensor mask;           // (H, W), 1 = valid
    bool is_null = false;

    void validate() const;
};

// Bundle with is_null = true and all-zero conditioning, same mask.
ConditioningBundle null_bundle(const ConditioningBundle& like);

// Builds a bundle and enforces the mask contract (invalid pixels zeroed).
ConditioningBundle make_bundle(Tensor initial_frame, Tensor era5_stack, Tensor mask);

struct DenoiserConfig {
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int temporal_attention_heads = 2;
    int cond_channels = 3;   // ERA5-like channels per timestep
    int cond_timesteps = 3;  // conditioning timesteps
    int embed_dim = 128;     // log-SNR embedding width
    int resolution = 64;
    int max_frames = 10;

    int num_levels() const { return static_cast<int>(channel_multipliers.size()); }
    // z + initial frame + flattened ERA5 stack, concatenated on channels.
    int in_channels() const { return 2 + cond_timesteps * cond_channels; }
    void validate() const;
};

// GroupNorm -> SiLU -> Conv, log-SNR bias injection, second GN -> SiLU ->
// Conv, residual skip (1x1 conv when the width changes).
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(const std::string& name, int cin, int cout, int embed_dim, Rng& rng);

    Tensor forward(const Tensor& x, const Tensor& silu_emb);
    // gsilu_emb accumulates the gradient flowing into the shared embedding.
    Tensor backward(const Tensor& gout, Tensor& gsilu_emb);
    void collect(ParamRefs& out);

private:
    int cin_ = 0, cout_ = 0;
    GroupNorm gn1_, gn2_;
    SiLU act1_, act2_;
    Conv2d conv1_, conv2_;
    Linear emb_proj_;
    bool has_skip_ = false;
    Conv2d skip_;
};

// Frame-position embedding, temporal-conv residual branch, optional
// temporal-attention residual branch. T = 1 clips pass through with the
// temporal layers acting as (near-)identity residual updates.
class TemporalBlock {
public:
    TemporalBlock() = default;
    TemporalBlock(const std::string& name, int channels, int max_frames, int heads,
                  bool with_attention, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out);
    bool has_attention() const { return with_attention_; }

private:
    bool with_attention_ = false;
    FramePosEmbed pos_;
    GroupNorm gn_c_;
    SiLU act_c_;
    TemporalConv tconv_;
    GroupNorm gn_a_;
    TemporalAttention attn_;
};

// The conditional denoiser: a UNet over (T, 1, H, W) video clips whose every
// level pairs a spatial ResBlock with a temporal mixing block. Temporal
// attention sits at the two lowest-resolution levels (and the middle); the
// deepest level always has it. Conditioning enters by channel concatenation;
// the log-SNR embedding is added per ResBlock.
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

    // z: (T, 1, H, W) with T in [1, max_frames] -> eps_hat, same shape.
    // `t` is carried for interface completeness; the network conditions on
    // lambda_t.
    Tensor forward(const Tensor& z, int t, double lambda_t, const ConditioningBundle& cond);

    // Backpropagates dLoss/dEps into parameter gradients.
    void backward(const Tensor& gout);

    ParamRefs params();  // stable traversal order
    std::uint64_t param_count();
    const DenoiserConfig& config() const { return cfg_; }

private:
    DenoiserConfig cfg_;
    std::vector<int> ch_;  // channels per level

    Conv2d in_conv_;
    // per level
    std::vector<AvgPool2> down_pool_;
    std::vector<Conv2d> down_conv_;
    std::vector<ResBlock> down_res_;
    std::vector<TemporalBlock> down_temp_;
    ResBlock mid_res1_, mid_res2_;
    TemporalBlock mid_temp_;
    std::vector<ResBlock> up_res_;
    std::vector<TemporalBlock> up_temp_;
    std::vector<UpsampleNearest2> up_upsample_;
    std::vector<Conv2d> up_conv_;
    GroupNorm out_gn_;
    SiLU out_act_;
    Conv2d out_conv_;

    Linear emb_fc1_, emb_fc2_;
    SiLU emb_act_mid_, emb_act_out_;

    // forward caches
    std::vector<Tensor> skips_;
    Tensor silu_emb_;
    std::vector<std::int64_t> skip_shapes_unused_;
};

}  // namespace cyclocast::net
