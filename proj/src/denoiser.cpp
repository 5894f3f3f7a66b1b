#include "cyclocast/net/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclocast/kern/kernels.hpp"

namespace cyclocast::net {

namespace {

// Largest group count that still leaves >= 2 channels per group; plain
// per-channel normalization would cancel the bias of any conv feeding it.
int norm_groups(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0 && channels / g >= 2) return g;
    return 1;
}

void check_finite(const Tensor& t, const char* what) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i]))
            throw std::runtime_error(std::string(what) + ": non-finite activation");
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor out({N, Ca + Cb, H, W});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy_n(a.data() + n * Ca * hw, Ca * hw, out.data() + n * (Ca + Cb) * hw);
        std::copy_n(b.data() + n * Cb * hw, Cb * hw, out.data() + (n * (Ca + Cb) + Ca) * hw);
    }
    return out;
}

void split_channels(const Tensor& g, std::int64_t Ca, Tensor& ga, Tensor& gb) {
    const std::int64_t N = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3);
    const std::int64_t Cb = C - Ca;
    ga = Tensor({N, Ca, H, W});
    gb = Tensor({N, Cb, H, W});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy_n(g.data() + n * C * hw, Ca * hw, ga.data() + n * Ca * hw);
        std::copy_n(g.data() + (n * C + Ca) * hw, Cb * hw, gb.data() + n * Cb * hw);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// ConditioningBundle

void ConditioningBundle::validate() const {
    if (initial_frame.rank() != 2) throw std::invalid_argument("bundle: initial_frame must be (H, W)");
    if (era5_stack.rank() != 4) throw std::invalid_argument("bundle: era5_stack must be (K, C, H, W)");
    if (mask.rank() != 2) throw std::invalid_argument("bundle: mask must be (H, W)");
    if (era5_stack.dim(2) != initial_frame.dim(0) || era5_stack.dim(3) != initial_frame.dim(1) ||
        mask.dim(0) != initial_frame.dim(0) || mask.dim(1) != initial_frame.dim(1))
        throw std::invalid_argument("bundle: inconsistent spatial shapes");
    for (std::size_t i = 0; i < initial_frame.size(); ++i)
        if (!std::isfinite(initial_frame[i])) throw std::invalid_argument("bundle: non-finite frame");
    for (std::size_t i = 0; i < era5_stack.size(); ++i)
        if (!std::isfinite(era5_stack[i])) throw std::invalid_argument("bundle: non-finite era5");
}

ConditioningBundle null_bundle(const ConditioningBundle& like) {
    ConditioningBundle b;
    b.initial_frame = Tensor(like.initial_frame.shape());
    b.era5_stack = Tensor(like.era5_stack.shape());
    b.mask = like.mask;
    b.is_null = true;
    return b;
}

ConditioningBundle make_bundle(Tensor initial_frame, Tensor era5_stack, Tensor mask) {
    ConditioningBundle b;
    b.initial_frame = std::move(initial_frame);
    b.era5_stack = std::move(era5_stack);
    b.mask = std::move(mask);
    b.is_null = false;
    // Mask contract: invalid pixels are exactly zero in every conditioning
    // plane, so perturbing them upstream cannot reach the model.
    const std::size_t hw = b.mask.size();
    for (std::size_t i = 0; i < hw; ++i) {
        if (b.mask[i] != 0.0) continue;
        b.initial_frame[i] = 0.0;
        for (std::size_t p = 0; p < b.era5_stack.size() / hw; ++p) b.era5_stack[p * hw + i] = 0.0;
    }
    b.validate();
    return b;
}

// ---------------------------------------------------------------------------
// DenoiserConfig

void DenoiserConfig::validate() const {
    if (base_channels < 1) throw std::invalid_argument("denoiser: base_channels must be >= 1");
    if (channel_multipliers.empty())
        throw std::invalid_argument("denoiser: channel_multipliers must be non-empty");
    for (int m : channel_multipliers)
        if (m < 1) throw std::invalid_argument("denoiser: multipliers must be positive");
    if (cond_timesteps < 1) throw std::invalid_argument("denoiser: cond_timesteps must be >= 1");
    if (temporal_attention_heads < 1) throw std::invalid_argument("denoiser: heads must be >= 1");
    if (max_frames < 1) throw std::invalid_argument("denoiser: max_frames must be >= 1");
    const int div = 1 << (num_levels() - 1);
    if (resolution % div != 0)
        throw std::invalid_argument("denoiser: resolution " + std::to_string(resolution) +
                                    " not divisible by 2^(levels-1) = " + std::to_string(div));
}

// ---------------------------------------------------------------------------
// ResBlock

ResBlock::ResBlock(const std::string& name, int cin, int cout, int embed_dim, Rng& rng)
    : cin_(cin), cout_(cout) {
    gn1_ = GroupNorm(name + ".gn1", cin, norm_groups(cin));
    conv1_ = Conv2d(name + ".conv1", cin, cout, 3, rng);
    emb_proj_ = Linear(name + ".emb", embed_dim, cout, rng);
    gn2_ = GroupNorm(name + ".gn2", cout, norm_groups(cout));
    conv2_ = Conv2d(name + ".conv2", cout, cout, 3, rng);
    has_skip_ = cin != cout;
    if (has_skip_) skip_ = Conv2d(name + ".skip", cin, cout, 1, rng);
}

void ResBlock::collect(ParamRefs& out) {
    gn1_.collect(out);
    conv1_.collect(out);
    emb_proj_.collect(out);
    gn2_.collect(out);
    conv2_.collect(out);
    if (has_skip_) skip_.collect(out);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& silu_emb) {
    Tensor h = conv1_.forward(act1_.forward(gn1_.forward(x)));
    const Tensor bias = emb_proj_.forward(silu_emb);  // (1, cout)
    const std::int64_t N = h.dim(0), H = h.dim(2), W = h.dim(3);
    for (std::int64_t n = 0; n < N; ++n)
        for (int c = 0; c < cout_; ++c) {
            double* p = h.data() + ((n * cout_ + c) * H) * W;
            const double b = bias[c];
            for (std::int64_t i = 0; i < H * W; ++i) p[i] += b;
        }
    Tensor h2 = conv2_.forward(act2_.forward(gn2_.forward(h)));

    Tensor out = has_skip_ ? skip_.forward(x) : x;
    kern::active().vadd(out.data(), out.data(), h2.data(), out.size());
    return out;
}

Tensor ResBlock::backward(const Tensor& gout, Tensor& gsilu_emb) {
    Tensor gh = gn2_.backward(act2_.backward(conv2_.backward(gout)));

    // Bias add: gradient per output channel sums over frames and space.
    const std::int64_t N = gh.dim(0), H = gh.dim(2), W = gh.dim(3);
    Tensor gbias({1, cout_});
    const auto& k = kern::active();
    for (std::int64_t n = 0; n < N; ++n)
        for (int c = 0; c < cout_; ++c)
            gbias[c] += k.sum(gh.data() + ((n * cout_ + c) * H) * W, static_cast<std::size_t>(H * W));
    Tensor gemb = emb_proj_.backward(gbias);
    k.vadd(gsilu_emb.data(), gsilu_emb.data(), gemb.data(), gsilu_emb.size());

    Tensor gx = gn1_.backward(act1_.backward(conv1_.backward(gh)));
    if (has_skip_) {
        Tensor gskip = skip_.backward(gout);
        k.vadd(gx.data(), gx.data(), gskip.data(), gx.size());
    } else {
        k.vadd(gx.data(), gx.data(), gout.data(), gx.size());
    }
    return gx;
}

// ---------------------------------------------------------------------------
// TemporalBlock

TemporalBlock::TemporalBlock(const std::string& name, int channels, int max_frames, int heads,
                             bool with_attention, Rng& rng)
    : with_attention_(with_attention) {
    pos_ = FramePosEmbed(name + ".pos", max_frames, channels, rng);
    gn_c_ = GroupNorm(name + ".gnc", channels, norm_groups(channels));
    tconv_ = TemporalConv(name + ".tconv", channels, channels, rng);
    if (with_attention) {
        gn_a_ = GroupNorm(name + ".gna", channels, norm_groups(channels));
        attn_ = TemporalAttention(name + ".attn", channels, heads, rng);
    }
}

void TemporalBlock::collect(ParamRefs& out) {
    pos_.collect(out);
    gn_c_.collect(out);
    tconv_.collect(out);
    if (with_attention_) {
        gn_a_.collect(out);
        attn_.collect(out);
    }
}

Tensor TemporalBlock::forward(const Tensor& x) {
    Tensor h = pos_.forward(x);
    Tensor branch = tconv_.forward(act_c_.forward(gn_c_.forward(h)));
    kern::active().vadd(branch.data(), branch.data(), h.data(), branch.size());
    if (!with_attention_) return branch;
    Tensor a = attn_.forward(gn_a_.forward(branch));
    kern::active().vadd(a.data(), a.data(), branch.data(), a.size());
    return a;
}

Tensor TemporalBlock::backward(const Tensor& gout) {
    Tensor g = gout;
    if (with_attention_) {
        Tensor ga = gn_a_.backward(attn_.backward(gout));
        g = Tensor(gout.shape());
        kern::active().vadd(g.data(), ga.data(), gout.data(), g.size());
    }
    Tensor gb = gn_c_.backward(act_c_.backward(tconv_.backward(g)));
    kern::active().vadd(gb.data(), gb.data(), g.data(), gb.size());
    return pos_.backward(gb);
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed ^ 0x64656e6fULL);

    const int L = cfg_.num_levels();
    ch_.resize(L);
    for (int i = 0; i < L; ++i) ch_[i] = cfg_.base_channels * cfg_.channel_multipliers[i];

    const int E = cfg_.embed_dim;
    emb_fc1_ = Linear("time_mlp.fc1", E, E, rng);
    emb_fc2_ = Linear("time_mlp.fc2", E, E, rng);

    in_conv_ = Conv2d("in_conv", cfg_.in_channels(), ch_[0], 3, rng);

    // Temporal attention at the two lowest-resolution levels; with one level
    // that one (the lowest) has it.
    const int attn_from = std::max(0, L - 2);

    down_pool_.resize(L);
    down_conv_.resize(L);
    down_res_.reserve(L);
    down_temp_.reserve(L);
    for (int i = 0; i < L; ++i) {
        const std::string base = "down" + std::to_string(i);
        if (i > 0) down_conv_[i] = Conv2d(base + ".pool_conv", ch_[i - 1], ch_[i], 3, rng);
        down_res_.emplace_back(base + ".res", ch_[i], ch_[i], E, rng);
        down_temp_.emplace_back(base + ".temp", ch_[i], cfg_.max_frames,
                                cfg_.temporal_attention_heads, i >= attn_from, rng);
    }

    mid_res1_ = ResBlock("mid.res1", ch_[L - 1], ch_[L - 1], E, rng);
    mid_temp_ = TemporalBlock("mid.temp", ch_[L - 1], cfg_.max_frames,
                              cfg_.temporal_attention_heads, true, rng);
    mid_res2_ = ResBlock("mid.res2", ch_[L - 1], ch_[L - 1], E, rng);

    up_res_.reserve(L);
    up_temp_.reserve(L);
    up_upsample_.resize(L);
    up_conv_.resize(L);
    for (int i = L - 1; i >= 0; --i) {
        const std::string base = "up" + std::to_string(i);
        up_res_.emplace_back(base + ".res", 2 * ch_[i], ch_[i], E, rng);
        up_temp_.emplace_back(base + ".temp", ch_[i], cfg_.max_frames,
                              cfg_.temporal_attention_heads, i >= attn_from, rng);
        if (i > 0) up_conv_[i] = Conv2d(base + ".up_conv", ch_[i], ch_[i - 1], 3, rng);
    }

    out_gn_ = GroupNorm("out.gn", ch_[0], norm_groups(ch_[0]));
    out_conv_ = Conv2d("out.conv", ch_[0], 1, 3, rng);
}

ParamRefs Denoiser::params() {
    ParamRefs out;
    emb_fc1_.collect(out);
    emb_fc2_.collect(out);
    in_conv_.collect(out);
    const int L = cfg_.num_levels();
    for (int i = 0; i < L; ++i) {
        if (i > 0) down_conv_[i].collect(out);
        down_res_[i].collect(out);
        down_temp_[i].collect(out);
    }
    mid_res1_.collect(out);
    mid_temp_.collect(out);
    mid_res2_.collect(out);
    for (int j = 0; j < L; ++j) {
        const int i = L - 1 - j;
        up_res_[j].collect(out);
        up_temp_[j].collect(out);
        if (i > 0) up_conv_[i].collect(out);
    }
    out_gn_.collect(out);
    out_conv_.collect(out);
    return out;
}

std::uint64_t Denoiser::param_count() {
    std::uint64_t n = 0;
    for (const Param* p : params()) n += p->value.size();
    return n;
}

Tensor Denoiser::forward(const Tensor& z, int t, double lambda_t, const ConditioningBundle& cond) {
    (void)t;
    if (z.rank() != 4 || z.dim(1) != 1)
        throw std::invalid_argument("denoiser: z must be (T, 1, H, W)");
    const std::int64_t T = z.dim(0), H = z.dim(2), W = z.dim(3);
    if (T < 1 || T > cfg_.max_frames)
        throw std::invalid_argument("denoiser: T outside [1, max_frames]");
    if (H != cfg_.resolution || W != cfg_.resolution)
        throw std::invalid_argument("denoiser: resolution mismatch");
    cond.validate();
    if (cond.era5_stack.dim(0) != cfg_.cond_timesteps || cond.era5_stack.dim(1) != cfg_.cond_channels)
        throw std::invalid_argument("denoiser: conditioning stack shape mismatch");
    if (cond.initial_frame.dim(0) != H || cond.initial_frame.dim(1) != W)
        throw std::invalid_argument("denoiser: conditioning resolution mismatch");
    check_finite(z, "denoiser input");

    // Channel concat: [z | initial frame | era5 slices], conditioning
    // broadcast over frames. Null bundles contribute zeros.
    const int in_ch = cfg_.in_channels();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor x({T, in_ch, H, W});
    for (std::int64_t f = 0; f < T; ++f) {
        double* base = x.data() + f * in_ch * hw;
        std::copy_n(z.data() + f * hw, hw, base);
        if (!cond.is_null) {
            std::copy_n(cond.initial_frame.data(), hw, base + hw);
            std::copy_n(cond.era5_stack.data(), cond.era5_stack.size(), base + 2 * hw);
        }
    }

    // log-SNR embedding shared by every ResBlock.
    const std::vector<double> sinus = sinusoidal_embed(lambda_t, cfg_.embed_dim);
    Tensor se({1, cfg_.embed_dim});
    std::copy(sinus.begin(), sinus.end(), se.data());
    Tensor emb = emb_fc2_.forward(emb_act_mid_.forward(emb_fc1_.forward(se)));
    silu_emb_ = emb_act_out_.forward(emb);

    const int L = cfg_.num_levels();
    skips_.clear();
    Tensor h = in_conv_.forward(x);
    for (int i = 0; i < L; ++i) {
        if (i > 0) h = down_conv_[i].forward(down_pool_[i].forward(h));
        h = down_res_[i].forward(h, silu_emb_);
        h = down_temp_[i].forward(h);
        skips_.push_back(h);
    }

    h = mid_res1_.forward(h, silu_emb_);
    h = mid_temp_.forward(h);
    h = mid_res2_.forward(h, silu_emb_);

    for (int j = 0; j < L; ++j) {
        const int i = L - 1 - j;
        h = concat_channels(h, skips_[i]);
        h = up_res_[j].forward(h, silu_emb_);
        h = up_temp_[j].forward(h);
        if (i > 0) h = up_conv_[i].forward(up_upsample_[i].forward(h));
    }

    Tensor out = out_conv_.forward(out_act_.forward(out_gn_.forward(h)));
    check_finite(out, "denoiser output");
    return out;
}

void Denoiser::backward(const Tensor& gout) {
    const int L = cfg_.num_levels();
    Tensor gsilu_emb({1, cfg_.embed_dim});

    Tensor g = out_gn_.backward(out_act_.backward(out_conv_.backward(gout)));

    std::vector<Tensor> gskips(L);
    for (int j = L - 1; j >= 0; --j) {
        const int i = L - 1 - j;
        if (i > 0) g = up_upsample_[i].backward(up_conv_[i].backward(g));
        g = up_temp_[j].backward(g);
        g = up_res_[j].backward(g, gsilu_emb);
        Tensor gh, gskip;
        split_channels(g, ch_[i], gh, gskip);
        gskips[i] = std::move(gskip);
        g = std::move(gh);
    }

    g = mid_res2_.backward(g, gsilu_emb);
    g = mid_temp_.backward(g);
    g = mid_res1_.backward(g, gsilu_emb);

    for (int i = L - 1; i >= 0; --i) {
        kern::active().vadd(g.data(), g.data(), gskips[i].data(), g.size());
        g = down_temp_[i].backward(g);
        g = down_res_[i].backward(g, gsilu_emb);
        if (i > 0) g = down_pool_[i].backward(down_conv_[i].backward(g));
    }
    g = in_conv_.backward(g);

    Tensor gemb = emb_act_out_.backward(gsilu_emb);
    emb_fc1_.backward(emb_act_mid_.backward(emb_fc2_.backward(gemb)));
}

}  // namespace cyclocast::net
