#include "cyclocast/net/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclocast/kern/kernels.hpp"

namespace cyclocast::net {

namespace {

void fill_kaiming(Rng& rng, Tensor& w, int fan_in) {
    const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = s * rng.gaussian();
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int cin, int cout, int ksize, Rng& rng)
    : cin_(cin), cout_(cout), k_(ksize) {
    if (ksize != 1 && ksize != 3) throw std::invalid_argument("Conv2d: kernel must be 1 or 3");
    w_.name = name + ".w";
    b_.name = name + ".b";
    w_.init_shape({cout, cin, ksize, ksize});
    b_.init_shape({cout});
    fill_kaiming(rng, w_.value, cin * ksize * ksize);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != cin_)
        throw std::invalid_argument("Conv2d: bad input shape " + Tensor::shape_str(x.shape()));
    in_shape_ = x.shape();
    const std::int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int pad = k_ / 2;
    const std::int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;

    padded_ = Tensor({N, cin_, Hp, Wp});
    for (std::int64_t n = 0; n < N; ++n)
        for (int c = 0; c < cin_; ++c) {
            const double* src = x.data() + ((n * cin_ + c) * H) * W;
            double* dst = padded_.data() + ((n * cin_ + c) * Hp + pad) * Wp + pad;
            for (std::int64_t y = 0; y < H; ++y)
                std::copy_n(src + y * W, W, dst + y * Wp);
        }

    const auto& k = kern::active();
    Tensor out({N, cout_, H, W});
    for (std::int64_t n = 0; n < N; ++n)
        for (int co = 0; co < cout_; ++co) {
            double* orow0 = out.data() + ((n * cout_ + co) * H) * W;
            for (std::int64_t i = 0; i < H * W; ++i) orow0[i] = b_.value[co];
            for (int ci = 0; ci < cin_; ++ci) {
                const double* pin = padded_.data() + ((n * cin_ + ci) * Hp) * Wp;
                const double* wk = w_.value.data() + ((static_cast<std::size_t>(co) * cin_ + ci) * k_) * k_;
                for (int ky = 0; ky < k_; ++ky)
                    for (int kx = 0; kx < k_; ++kx) {
                        const double wv = wk[ky * k_ + kx];
                        for (std::int64_t y = 0; y < H; ++y)
                            k.axpy(orow0 + y * W, pin + (y + ky) * Wp + kx, wv, W);
                    }
            }
        }
    return out;
}

Tensor Conv2d::backward(const Tensor& gout) {
    const std::int64_t N = in_shape_[0], H = in_shape_[2], W = in_shape_[3];
    const int pad = k_ / 2;
    const std::int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;
    const auto& k = kern::active();

    Tensor gpad({N, cin_, Hp, Wp});
    for (std::int64_t n = 0; n < N; ++n)
        for (int co = 0; co < cout_; ++co) {
            const double* grow0 = gout.data() + ((n * cout_ + co) * H) * W;
            b_.grad[co] += k.sum(grow0, static_cast<std::size_t>(H * W));
            for (int ci = 0; ci < cin_; ++ci) {
                double* gp = gpad.data() + ((n * cin_ + ci) * Hp) * Wp;
                const double* pin = padded_.data() + ((n * cin_ + ci) * Hp) * Wp;
                double* wg = w_.grad.data() + ((static_cast<std::size_t>(co) * cin_ + ci) * k_) * k_;
                const double* wv = w_.value.data() + ((static_cast<std::size_t>(co) * cin_ + ci) * k_) * k_;
                for (int ky = 0; ky < k_; ++ky)
                    for (int kx = 0; kx < k_; ++kx) {
                        double acc = 0.0;
                        for (std::int64_t y = 0; y < H; ++y) {
                            acc += k.dot(grow0 + y * W, pin + (y + ky) * Wp + kx, W);
                            k.axpy(gp + (y + ky) * Wp + kx, grow0 + y * W, wv[ky * k_ + kx], W);
                        }
                        wg[ky * k_ + kx] += acc;
                    }
            }
        }

    Tensor gin(in_shape_);
    for (std::int64_t n = 0; n < N; ++n)
        for (int c = 0; c < cin_; ++c) {
            const double* src = gpad.data() + ((n * cin_ + c) * Hp + pad) * Wp + pad;
            double* dst = gin.data() + ((n * cin_ + c) * H) * W;
            for (std::int64_t y = 0; y < H; ++y)
                std::copy_n(src + y * Wp, W, dst + y * W);
        }
    return gin;
}

// ---------------------------------------------------------------------------
// GroupNorm

GroupNorm::GroupNorm(const std::string& name, int channels, int groups)
    : channels_(channels), groups_(groups) {
    if (channels % groups != 0) throw std::invalid_argument("GroupNorm: channels % groups != 0");
    gamma_.name = name + ".gamma";
    beta_.name = name + ".beta";
    gamma_.init_shape({channels});
    beta_.init_shape({channels});
    gamma_.value.fill(1.0);
}

Tensor GroupNorm::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != channels_)
        throw std::invalid_argument("GroupNorm: bad input shape");
    const std::int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int cg = channels_ / groups_;
    const std::size_t group_elems = static_cast<std::size_t>(cg) * H * W;
    constexpr double eps = 1e-5;
    const auto& k = kern::active();

    xhat_ = Tensor(x.shape());
    inv_std_.assign(static_cast<std::size_t>(N) * groups_, 0.0);

    Tensor out(x.shape());
    for (std::int64_t n = 0; n < N; ++n)
        for (int g = 0; g < groups_; ++g) {
            const double* xp = x.data() + ((n * channels_ + g * cg) * H) * W;
            const double mean = k.sum(xp, group_elems) / static_cast<double>(group_elems);
            double var = 0.0;
            for (std::size_t i = 0; i < group_elems; ++i) {
                const double d = xp[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(group_elems);
            const double istd = 1.0 / std::sqrt(var + eps);
            inv_std_[n * groups_ + g] = istd;

            double* xh = xhat_.data() + ((n * channels_ + g * cg) * H) * W;
            double* op = out.data() + ((n * channels_ + g * cg) * H) * W;
            for (int c = 0; c < cg; ++c) {
                const double ga = gamma_.value[g * cg + c];
                const double be = beta_.value[g * cg + c];
                const double* xc = xp + static_cast<std::size_t>(c) * H * W;
                double* xhc = xh + static_cast<std::size_t>(c) * H * W;
                double* oc = op + static_cast<std::size_t>(c) * H * W;
                for (std::int64_t i = 0; i < H * W; ++i) {
                    xhc[i] = (xc[i] - mean) * istd;
                    oc[i] = ga * xhc[i] + be;
                }
            }
        }
    return out;
}

Tensor GroupNorm::backward(const Tensor& gout) {
    const std::int64_t N = gout.dim(0), H = gout.dim(2), W = gout.dim(3);
    const int cg = channels_ / groups_;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t m = static_cast<std::size_t>(cg) * hw;

    Tensor gin(gout.shape());
    for (std::int64_t n = 0; n < N; ++n)
        for (int g = 0; g < groups_; ++g) {
            const double istd = inv_std_[n * groups_ + g];
            const double* go = gout.data() + ((n * channels_ + g * cg) * H) * W;
            const double* xh = xhat_.data() + ((n * channels_ + g * cg) * H) * W;

            // Per-channel param grads plus the two group-wide sums the input
            // gradient needs: sum(dxhat) and sum(dxhat * xhat).
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int c = 0; c < cg; ++c) {
                const double ga = gamma_.value[g * cg + c];
                const double* goc = go + c * hw;
                const double* xhc = xh + c * hw;
                double gsum = 0.0, gxsum = 0.0;
                for (std::size_t i = 0; i < hw; ++i) {
                    gsum += goc[i];
                    gxsum += goc[i] * xhc[i];
                }
                beta_.grad[g * cg + c] += gsum;
                gamma_.grad[g * cg + c] += gxsum;
                sum_dxh += ga * gsum;
                sum_dxh_xh += ga * gxsum;
            }

            double* gi = gin.data() + ((n * channels_ + g * cg) * H) * W;
            const double inv_m = 1.0 / static_cast<double>(m);
            for (int c = 0; c < cg; ++c) {
                const double ga = gamma_.value[g * cg + c];
                const double* goc = go + c * hw;
                const double* xhc = xh + c * hw;
                double* gic = gi + c * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double dxh = ga * goc[i];
                    gic[i] = istd * (dxh - inv_m * (sum_dxh + xhc[i] * sum_dxh_xh));
                }
            }
        }
    return gin;
}

// ---------------------------------------------------------------------------
// SiLU

Tensor SiLU::forward(const Tensor& x) {
    x_ = x;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        out[i] = x[i] * s;
    }
    return out;
}

Tensor SiLU::backward(const Tensor& gout) {
    Tensor gin(gout.shape());
    for (std::size_t i = 0; i < gout.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x_[i]));
        gin[i] = gout[i] * (s * (1.0 + x_[i] * (1.0 - s)));
    }
    return gin;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init)
    : in_(in), out_(out) {
    w_.name = name + ".w";
    b_.name = name + ".b";
    w_.init_shape({out, in});
    b_.init_shape({out});
    if (!zero_init) fill_kaiming(rng, w_.value, in);
}

Tensor Linear::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != in_) throw std::invalid_argument("Linear: bad input shape");
    x_ = x;
    const std::int64_t N = x.dim(0);
    const auto& k = kern::active();
    Tensor out({N, out_});
    for (std::int64_t n = 0; n < N; ++n) {
        const double* xr = x.data() + n * in_;
        double* orow = out.data() + n * out_;
        for (int o = 0; o < out_; ++o)
            orow[o] = b_.value[o] + k.dot(w_.value.data() + static_cast<std::size_t>(o) * in_, xr, in_);
    }
    return out;
}

Tensor Linear::backward(const Tensor& gout) {
    const std::int64_t N = x_.dim(0);
    const auto& k = kern::active();
    Tensor gin({N, in_});
    for (std::int64_t n = 0; n < N; ++n) {
        const double* grow = gout.data() + n * out_;
        const double* xr = x_.data() + n * in_;
        double* girow = gin.data() + n * in_;
        for (int o = 0; o < out_; ++o) {
            const double g = grow[o];
            b_.grad[o] += g;
            k.axpy(w_.grad.data() + static_cast<std::size_t>(o) * in_, xr, g, in_);
            k.axpy(girow, w_.value.data() + static_cast<std::size_t>(o) * in_, g, in_);
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// AvgPool2 / UpsampleNearest2

Tensor AvgPool2::forward(const Tensor& x) {
    in_shape_ = x.shape();
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw std::invalid_argument("AvgPool2: odd spatial size");
    Tensor out({N, C, H / 2, W / 2});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = x.data() + nc * H * W;
        double* dst = out.data() + nc * (H / 2) * (W / 2);
        for (std::int64_t y = 0; y < H / 2; ++y)
            for (std::int64_t xw = 0; xw < W / 2; ++xw)
                dst[y * (W / 2) + xw] = 0.25 * (src[(2 * y) * W + 2 * xw] + src[(2 * y) * W + 2 * xw + 1] +
                                                src[(2 * y + 1) * W + 2 * xw] + src[(2 * y + 1) * W + 2 * xw + 1]);
    }
    return out;
}

Tensor AvgPool2::backward(const Tensor& gout) {
    const std::int64_t N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    Tensor gin(in_shape_);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = gout.data() + nc * (H / 2) * (W / 2);
        double* dst = gin.data() + nc * H * W;
        for (std::int64_t y = 0; y < H / 2; ++y)
            for (std::int64_t xw = 0; xw < W / 2; ++xw) {
                const double g = 0.25 * src[y * (W / 2) + xw];
                dst[(2 * y) * W + 2 * xw] = g;
                dst[(2 * y) * W + 2 * xw + 1] = g;
                dst[(2 * y + 1) * W + 2 * xw] = g;
                dst[(2 * y + 1) * W + 2 * xw + 1] = g;
            }
    }
    return gin;
}

Tensor UpsampleNearest2::forward(const Tensor& x) {
    in_shape_ = x.shape();
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({N, C, 2 * H, 2 * W});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = x.data() + nc * H * W;
        double* dst = out.data() + nc * 4 * H * W;
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t xw = 0; xw < W; ++xw) {
                const double v = src[y * W + xw];
                dst[(2 * y) * 2 * W + 2 * xw] = v;
                dst[(2 * y) * 2 * W + 2 * xw + 1] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xw] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xw + 1] = v;
            }
    }
    return out;
}

Tensor UpsampleNearest2::backward(const Tensor& gout) {
    const std::int64_t N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    Tensor gin(in_shape_);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = gout.data() + nc * 4 * H * W;
        double* dst = gin.data() + nc * H * W;
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t xw = 0; xw < W; ++xw)
                dst[y * W + xw] = src[(2 * y) * 2 * W + 2 * xw] + src[(2 * y) * 2 * W + 2 * xw + 1] +
                                  src[(2 * y + 1) * 2 * W + 2 * xw] + src[(2 * y + 1) * 2 * W + 2 * xw + 1];
    }
    return gin;
}

// ---------------------------------------------------------------------------
// TemporalConv

TemporalConv::TemporalConv(const std::string& name, int cin, int cout, Rng& rng)
    : cin_(cin), cout_(cout) {
    w_.name = name + ".w";
    b_.name = name + ".b";
    w_.init_shape({cout, cin, 3});
    b_.init_shape({cout});
    fill_kaiming(rng, w_.value, cin * 3);
}

Tensor TemporalConv::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != cin_)
        throw std::invalid_argument("TemporalConv: bad input shape");
    x_ = x;
    const std::int64_t T = x.dim(0), H = x.dim(2), W = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const auto& k = kern::active();

    Tensor out({T, cout_, H, W});
    for (std::int64_t t = 0; t < T; ++t)
        for (int co = 0; co < cout_; ++co) {
            double* op = out.data() + ((t * cout_ + co) * H) * W;
            for (std::size_t i = 0; i < hw; ++i) op[i] = b_.value[co];
            for (int dt = -1; dt <= 1; ++dt) {
                const std::int64_t s = t + dt;
                if (s < 0 || s >= T) continue;
                for (int ci = 0; ci < cin_; ++ci)
                    k.axpy(op, x.data() + ((s * cin_ + ci) * H) * W,
                           w_.value[(static_cast<std::size_t>(co) * cin_ + ci) * 3 + (dt + 1)], hw);
            }
        }
    return out;
}

Tensor TemporalConv::backward(const Tensor& gout) {
    const std::int64_t T = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const auto& k = kern::active();

    Tensor gin(x_.shape());
    for (std::int64_t t = 0; t < T; ++t)
        for (int co = 0; co < cout_; ++co) {
            const double* go = gout.data() + ((t * cout_ + co) * H) * W;
            b_.grad[co] += k.sum(go, hw);
            for (int dt = -1; dt <= 1; ++dt) {
                const std::int64_t s = t + dt;
                if (s < 0 || s >= T) continue;
                for (int ci = 0; ci < cin_; ++ci) {
                    const std::size_t widx = (static_cast<std::size_t>(co) * cin_ + ci) * 3 + (dt + 1);
                    w_.grad[widx] += k.dot(go, x_.data() + ((s * cin_ + ci) * H) * W, hw);
                    k.axpy(gin.data() + ((s * cin_ + ci) * H) * W, go, w_.value[widx], hw);
                }
            }
        }
    return gin;
}

// ---------------------------------------------------------------------------
// TemporalAttention

TemporalAttention::TemporalAttention(const std::string& name, int channels, int heads, Rng& rng)
    : channels_(channels), heads_(heads) {
    if (channels % heads != 0)
        throw std::invalid_argument("TemporalAttention: channels % heads != 0");
    head_dim_ = channels / heads;
    qkv_ = Linear(name + ".qkv", channels, 3 * channels, rng);
    proj_ = Linear(name + ".proj", channels, channels, rng);
}

void TemporalAttention::collect(ParamRefs& out) {
    qkv_.collect(out);
    proj_.collect(out);
}

Tensor TemporalAttention::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != channels_)
        throw std::invalid_argument("TemporalAttention: bad input shape");
    in_shape_ = x.shape();
    const std::int64_t T = x.dim(0), H = x.dim(2), W = x.dim(3);
    const std::int64_t B = H * W;
    const std::int64_t C = channels_;

    // Gather tokens: (B*T, C), pixel-major so each pixel's T frames are
    // contiguous rows.
    tokens_ = Tensor({B * T, C});
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c) {
            const double* src = x.data() + ((t * C + c) * H) * W;
            for (std::int64_t p = 0; p < B; ++p) tokens_[(p * T + t) * C + c] = src[p];
        }

    qkv_out_ = qkv_.forward(tokens_);  // (B*T, 3C)

    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    attn_ = Tensor({B, heads_, T, T});
    ctx_ = Tensor({B * T, C});

    for (std::int64_t p = 0; p < B; ++p)
        for (int h = 0; h < heads_; ++h) {
            const std::int64_t off = h * head_dim_;
            double* a = attn_.data() + ((p * heads_ + h) * T) * T;
            // scores + softmax per query row
            for (std::int64_t ti = 0; ti < T; ++ti) {
                const double* q = qkv_out_.data() + (p * T + ti) * 3 * C + off;
                double maxv = -1e300;
                for (std::int64_t tj = 0; tj < T; ++tj) {
                    const double* kv = qkv_out_.data() + (p * T + tj) * 3 * C + C + off;
                    double s = 0.0;
                    for (int d = 0; d < head_dim_; ++d) s += q[d] * kv[d];
                    a[ti * T + tj] = s * scale;
                    maxv = std::max(maxv, a[ti * T + tj]);
                }
                double denom = 0.0;
                for (std::int64_t tj = 0; tj < T; ++tj) {
                    a[ti * T + tj] = std::exp(a[ti * T + tj] - maxv);
                    denom += a[ti * T + tj];
                }
                for (std::int64_t tj = 0; tj < T; ++tj) a[ti * T + tj] /= denom;
                // context = attn * V
                double* ctx = ctx_.data() + (p * T + ti) * C + off;
                for (int d = 0; d < head_dim_; ++d) ctx[d] = 0.0;
                for (std::int64_t tj = 0; tj < T; ++tj) {
                    const double* vv = qkv_out_.data() + (p * T + tj) * 3 * C + 2 * C + off;
                    const double aw = a[ti * T + tj];
                    for (int d = 0; d < head_dim_; ++d) ctx[d] += aw * vv[d];
                }
            }
        }

    Tensor projected = proj_.forward(ctx_);  // (B*T, C)

    Tensor out(in_shape_);
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c) {
            double* dst = out.data() + ((t * C + c) * H) * W;
            for (std::int64_t p = 0; p < B; ++p) dst[p] = projected[(p * T + t) * C + c];
        }
    return out;
}

Tensor TemporalAttention::backward(const Tensor& gout) {
    const std::int64_t T = in_shape_[0], H = in_shape_[2], W = in_shape_[3];
    const std::int64_t B = H * W;
    const std::int64_t C = channels_;

    Tensor gproj({B * T, C});
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c) {
            const double* src = gout.data() + ((t * C + c) * H) * W;
            for (std::int64_t p = 0; p < B; ++p) gproj[(p * T + t) * C + c] = src[p];
        }

    Tensor gctx = proj_.backward(gproj);  // (B*T, C)

    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    Tensor gqkv({B * T, 3 * C});

    for (std::int64_t p = 0; p < B; ++p)
        for (int h = 0; h < heads_; ++h) {
            const std::int64_t off = h * head_dim_;
            const double* a = attn_.data() + ((p * heads_ + h) * T) * T;
            for (std::int64_t ti = 0; ti < T; ++ti) {
                const double* gc = gctx.data() + (p * T + ti) * C + off;
                // dV and dA
                double da[64];  // T <= 64 in practice; guarded below
                if (T > 64) throw std::runtime_error("TemporalAttention: T too large");
                for (std::int64_t tj = 0; tj < T; ++tj) {
                    const double* vv = qkv_out_.data() + (p * T + tj) * 3 * C + 2 * C + off;
                    double s = 0.0;
                    for (int d = 0; d < head_dim_; ++d) s += gc[d] * vv[d];
                    da[tj] = s;
                    double* gv = gqkv.data() + (p * T + tj) * 3 * C + 2 * C + off;
                    const double aw = a[ti * T + tj];
                    for (int d = 0; d < head_dim_; ++d) gv[d] += aw * gc[d];
                }
                // softmax backward: ds = a .* (da - sum(da .* a))
                double dot_da_a = 0.0;
                for (std::int64_t tj = 0; tj < T; ++tj) dot_da_a += da[tj] * a[ti * T + tj];
                const double* q = qkv_out_.data() + (p * T + ti) * 3 * C + off;
                double* gq = gqkv.data() + (p * T + ti) * 3 * C + off;
                for (std::int64_t tj = 0; tj < T; ++tj) {
                    const double ds = a[ti * T + tj] * (da[tj] - dot_da_a) * scale;
                    const double* kv = qkv_out_.data() + (p * T + tj) * 3 * C + C + off;
                    double* gk = gqkv.data() + (p * T + tj) * 3 * C + C + off;
                    for (int d = 0; d < head_dim_; ++d) {
                        gq[d] += ds * kv[d];
                        gk[d] += ds * q[d];
                    }
                }
            }
        }

    Tensor gtokens = qkv_.backward(gqkv);  // (B*T, C)

    Tensor gin(in_shape_);
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c) {
            double* dst = gin.data() + ((t * C + c) * H) * W;
            for (std::int64_t p = 0; p < B; ++p) dst[p] = gtokens[(p * T + t) * C + c];
        }
    return gin;
}

// ---------------------------------------------------------------------------
// FramePosEmbed

FramePosEmbed::FramePosEmbed(const std::string& name, int max_frames, int channels, Rng& rng)
    : max_frames_(max_frames), channels_(channels) {
    table_.name = name + ".table";
    table_.init_shape({max_frames, channels});
    for (std::size_t i = 0; i < table_.value.size(); ++i)
        table_.value[i] = 0.02 * rng.gaussian();
}

Tensor FramePosEmbed::forward(const Tensor& x) {
    const std::int64_t T = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != channels_ || T > max_frames_)
        throw std::invalid_argument("FramePosEmbed: bad input shape");
    Tensor out = x;
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c) {
            const double e = table_.value[t * channels_ + c];
            double* dst = out.data() + ((t * C + c) * H) * W;
            for (std::int64_t i = 0; i < H * W; ++i) dst[i] += e;
        }
    return out;
}

Tensor FramePosEmbed::backward(const Tensor& gout) {
    const std::int64_t T = gout.dim(0), C = gout.dim(1), H = gout.dim(2), W = gout.dim(3);
    const auto& k = kern::active();
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c)
            table_.grad[t * channels_ + c] +=
                k.sum(gout.data() + ((t * C + c) * H) * W, static_cast<std::size_t>(H * W));
    return gout;
}

// ---------------------------------------------------------------------------
// Helpers

double global_grad_norm(const ParamRefs& params) {
    const auto& k = kern::active();
    double acc = 0.0;
    for (const Param* p : params) acc += k.sumsq(p->grad.data(), p->grad.size());
    return std::sqrt(acc);
}

void scale_grads(const ParamRefs& params, double factor) {
    const auto& k = kern::active();
    for (Param* p : params) k.scale(p->grad.data(), p->grad.data(), factor, p->grad.size());
}

void zero_grads(const ParamRefs& params) {
    for (Param* p : params) p->grad.zero();
}

std::vector<double> sinusoidal_embed(double value, int dim) {
    std::vector<double> out(dim, 0.0);
    const int half = dim / 2;
    for (int j = 0; j < half; ++j) {
        const double freq = std::exp(-std::log(10000.0) * j / std::max(1, half - 1));
        out[2 * j] = std::sin(value * freq);
        out[2 * j + 1] = std::cos(value * freq);
    }
    return out;
}

}  // namespace cyclocast::net
