#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cyclocast/core/rng.hpp"
#include "cyclocast/core/tensor.hpp"

// Small layer library with explicit forward/backward passes. Each layer
// caches what its backward needs; backward accumulates into param.grad and
// returns the input gradient. Frames are treated as batch entries by the
// spatial layers; temporal layers mix along T.

namespace cyclocast::net {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    void init_shape(std::vector<std::int64_t> shape) {
        value = Tensor(shape);
        grad = Tensor(std::move(shape));
    }
};

using ParamRefs = std::vector<Param*>;

// 2D convolution, kernel 1 or 3, stride 1, zero padding k/2.
// x: (N, Cin, H, W) -> (N, Cout, H, W)
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int cin, int cout, int ksize, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out) { out.push_back(&w_); out.push_back(&b_); }

private:
    int cin_ = 0, cout_ = 0, k_ = 0;
    Param w_, b_;
    Tensor padded_;  // cached padded input
    std::vector<std::int64_t> in_shape_;
};

// Group normalization over (C/G, H, W) per (frame, group).
class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(const std::string& name, int channels, int groups);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out) { out.push_back(&gamma_); out.push_back(&beta_); }

private:
    int channels_ = 0, groups_ = 0;
    Param gamma_, beta_;
    Tensor xhat_;
    std::vector<double> inv_std_;  // per (frame, group)
};

class SiLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);

private:
    Tensor x_;
};

// out = x W^T + b over the last dim; x: (N, in) -> (N, out)
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init = false);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out) { out.push_back(&w_); out.push_back(&b_); }

private:
    int in_ = 0, out_ = 0;
    Param w_, b_;
    Tensor x_;
};

// 2x2 average pool, exact backward. (N, C, H, W) -> (N, C, H/2, W/2)
class AvgPool2 {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);

private:
    std::vector<std::int64_t> in_shape_;
};

// 2x nearest-neighbour upsample. (N, C, H, W) -> (N, C, 2H, 2W)
class UpsampleNearest2 {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);

private:
    std::vector<std::int64_t> in_shape_;
};

// Temporal 1D convolution along the frame axis, kernel 3, zero padding.
// x: (T, C, H, W) -> (T, Cout, H, W); every (c, h, w) column mixes over T.
class TemporalConv {
public:
    TemporalConv() = default;
    TemporalConv(const std::string& name, int cin, int cout, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out) { out.push_back(&w_); out.push_back(&b_); }

private:
    int cin_ = 0, cout_ = 0;
    Param w_;  // (cout, cin, 3)
    Param b_;
    Tensor x_;
};

// Multi-head self-attention over the frame axis. Tokens are the T frames at
// one spatial location; every location attends independently.
// x: (T, C, H, W) -> (T, C, H, W)
class TemporalAttention {
public:
    TemporalAttention() = default;
    TemporalAttention(const std::string& name, int channels, int heads, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out);

private:
    int channels_ = 0, heads_ = 0, head_dim_ = 0;
    Linear qkv_, proj_;
    // caches, token-major: (B, T, C) with B = H*W
    Tensor tokens_, qkv_out_, attn_, ctx_;
    std::vector<std::int64_t> in_shape_;
};

// Learned per-frame-index embedding table, added per channel.
// x: (T, C, H, W), x[t, c] += table[t, c].
class FramePosEmbed {
public:
    FramePosEmbed() = default;
    FramePosEmbed(const std::string& name, int max_frames, int channels, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect(ParamRefs& out) { out.push_back(&table_); }

private:
    int max_frames_ = 0, channels_ = 0;
    Param table_;  // (max_frames, channels)
};

// Gradient helpers.
double global_grad_norm(const ParamRefs& params);
void scale_grads(const ParamRefs& params, double factor);
void zero_grads(const ParamRefs& params);

// Sinusoidal features of a scalar (used for the log-SNR embedding).
std::vector<double> sinusoidal_embed(double value, int dim);

}  // namespace cyclocast::net
