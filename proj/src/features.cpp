#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cyclocast/core/rng.hpp"
#include "cyclocast/metrics/metrics.hpp"

// Fixed-seed random-weight extractors backing FID/FVD. tanh keeps random
// features in range; fan-in scaling keeps activations O(1) through the
// stack. The clip extractor's temporal convolutions make frame order matter,
// which is the property FVD needs (asserted in tests, not assumed).

namespace cyclocast::metrics {

namespace {

constexpr int kSpatialCh[4] = {1, 12, 24, 48};  // conv levels, stride 2 each
constexpr int kTempHidden = 96;

void fill_scaled_gaussian(Rng& rng, Tensor& w, int fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = s * rng.gaussian();
}

// 3x3 stride-2 valid-ish conv (zero padding 1), tanh.
void conv3x3_s2_tanh(const Tensor& w, const Tensor& b, const std::vector<double>& in,
                     int cin, int h, int win_, std::vector<double>& out, int* oh, int* ow) {
    const int cout = static_cast<int>(w.dim(0));
    const int nh = (h + 1) / 2, nw = (win_ + 1) / 2;
    out.assign(static_cast<std::size_t>(cout) * nh * nw, 0.0);
    for (int co = 0; co < cout; ++co)
        for (int y = 0; y < nh; ++y)
            for (int x = 0; x < nw; ++x) {
                double acc = b[co];
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sy = 2 * y + ky - 1, sx = 2 * x + kx - 1;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= win_) continue;
                            acc += w[((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx] *
                                   in[(static_cast<std::size_t>(ci) * h + sy) * win_ + sx];
                        }
                out[(static_cast<std::size_t>(co) * nh + y) * nw + x] = std::tanh(acc);
            }
    *oh = nh;
    *ow = nw;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& cfg) : cfg_(cfg) {
    if (cfg.frame_feature_dim < 1 || cfg.clip_feature_dim < 1)
        throw std::invalid_argument("feature dims must be >= 1");
    Rng rng(cfg.seed);
    for (int l = 0; l < 3; ++l) {
        Tensor w({kSpatialCh[l + 1], kSpatialCh[l], 3, 3});
        Tensor b({kSpatialCh[l + 1]});
        fill_scaled_gaussian(rng, w, kSpatialCh[l] * 9);
        fill_scaled_gaussian(rng, b, 4);
        spatial_w_.push_back(std::move(w));
        spatial_b_.push_back(std::move(b));
    }
    frame_proj_w_ = Tensor({cfg.frame_feature_dim, kSpatialCh[3]});
    frame_proj_b_ = Tensor({cfg.frame_feature_dim});
    fill_scaled_gaussian(rng, frame_proj_w_, kSpatialCh[3]);
    fill_scaled_gaussian(rng, frame_proj_b_, 4);

    {
        Tensor w1({kTempHidden, kSpatialCh[3], 3});
        Tensor b1({kTempHidden});
        fill_scaled_gaussian(rng, w1, kSpatialCh[3] * 3);
        fill_scaled_gaussian(rng, b1, 4);
        temporal_w_.push_back(std::move(w1));
        temporal_b_.push_back(std::move(b1));
        Tensor w2({cfg.clip_feature_dim, kTempHidden, 3});
        Tensor b2({cfg.clip_feature_dim});
        fill_scaled_gaussian(rng, w2, kTempHidden * 3);
        fill_scaled_gaussian(rng, b2, 4);
        temporal_w_.push_back(std::move(w2));
        temporal_b_.push_back(std::move(b2));
    }
}

std::vector<double> FeatureExtractor::spatial_stack(const Tensor& frame, const Tensor& mask,
                                                    std::vector<double>* pooled_map, int* out_h,
                                                    int* out_w) const {
    if (frame.rank() != 2) throw std::invalid_argument("feature extractor: expected rank-2 frame");
    int h = static_cast<int>(frame.dim(0)), w = static_cast<int>(frame.dim(1));

    // Invalid pixels are zeroed on entry so they can never leak into the
    // features.
    std::vector<double> cur(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i)
        cur[i] = (mask.size() == 0 || mask[i] != 0.0) ? frame[i] : 0.0;

    std::vector<double> next;
    for (int l = 0; l < 3; ++l) {
        conv3x3_s2_tanh(spatial_w_[l], spatial_b_[l], cur, kSpatialCh[l], h, w, next, &h, &w);
        cur.swap(next);
    }
    if (pooled_map) *pooled_map = cur;
    if (out_h) *out_h = h;
    if (out_w) *out_w = w;

    // Global mean pool per channel.
    std::vector<double> pooled(kSpatialCh[3], 0.0);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < kSpatialCh[3]; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += cur[c * hw + i];
        pooled[c] = acc / static_cast<double>(hw);
    }
    return pooled;
}

std::vector<double> FeatureExtractor::frame_features(const Tensor& frame,
                                                     const Tensor& mask) const {
    const std::vector<double> pooled = spatial_stack(frame, mask, nullptr, nullptr, nullptr);
    std::vector<double> out(cfg_.frame_feature_dim, 0.0);
    for (int o = 0; o < cfg_.frame_feature_dim; ++o) {
        double acc = frame_proj_b_[o];
        for (int c = 0; c < kSpatialCh[3]; ++c)
            acc += frame_proj_w_[static_cast<std::size_t>(o) * kSpatialCh[3] + c] * pooled[c];
        out[o] = std::tanh(acc);
    }
    return out;
}

std::vector<double> FeatureExtractor::clip_features(const data::VideoClip& clip) const {
    const int T = static_cast<int>(clip.length());
    const std::size_t hw = static_cast<std::size_t>(clip.height()) * clip.width();

    // Per-frame pooled spatial features -> (T, C0) sequence.
    std::vector<std::vector<double>> seq(T);
    for (int t = 0; t < T; ++t) {
        Tensor frame({clip.height(), clip.width()});
        std::copy_n(clip.frames.data() + t * hw, hw, frame.data());
        seq[t] = spatial_stack(frame, clip.mask, nullptr, nullptr, nullptr);
    }

    // Two temporal convolutions (kernel 3, zero padding), tanh.
    for (int layer = 0; layer < 2; ++layer) {
        const Tensor& w = temporal_w_[layer];
        const Tensor& b = temporal_b_[layer];
        const int cout = static_cast<int>(w.dim(0));
        const int cin = static_cast<int>(w.dim(1));
        std::vector<std::vector<double>> next(T, std::vector<double>(cout, 0.0));
        for (int t = 0; t < T; ++t)
            for (int co = 0; co < cout; ++co) {
                double acc = b[co];
                for (int dt = -1; dt <= 1; ++dt) {
                    const int s = t + dt;
                    if (s < 0 || s >= T) continue;
                    for (int ci = 0; ci < cin; ++ci)
                        acc += w[(static_cast<std::size_t>(co) * cin + ci) * 3 + (dt + 1)] * seq[s][ci];
                }
                next[t][co] = std::tanh(acc);
            }
        seq.swap(next);
    }

    std::vector<double> out(cfg_.clip_feature_dim, 0.0);
    for (int c = 0; c < cfg_.clip_feature_dim; ++c) {
        double acc = 0.0;
        for (int t = 0; t < T; ++t) acc += seq[t][c];
        out[c] = acc / static_cast<double>(T);
    }
    return out;
}

namespace {

// Gaussian fit with canonical (sorted) sample order, then Frechet distance.
double frechet_from_features(std::vector<std::vector<double>> a,
                             std::vector<std::vector<double>> b, const char* what) {
    const std::size_t d = a.empty() ? 0 : a[0].size();
    if (a.size() <= d || b.size() <= d)
        throw std::invalid_argument(std::string(what) + ": needs more than feature_dim samples per side (covariance otherwise rank-deficient)");

    auto fit = [d](std::vector<std::vector<double>>& feats, std::vector<double>& mu, Tensor& cov) {
        std::sort(feats.begin(), feats.end());
        const double n = static_cast<double>(feats.size());
        mu.assign(d, 0.0);
        for (const auto& f : feats)
            for (std::size_t i = 0; i < d; ++i) mu[i] += f[i];
        for (auto& m : mu) m /= n;
        cov = Tensor({static_cast<std::int64_t>(d), static_cast<std::int64_t>(d)});
        for (const auto& f : feats)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    cov[i * d + j] += (f[i] - mu[i]) * (f[j] - mu[j]);
        for (std::size_t i = 0; i < d * d; ++i) cov[i] /= (n - 1.0);
        for (std::size_t i = 0; i < d; ++i) cov[i * d + i] += 1e-6;
    };

    std::vector<double> mu1, mu2;
    Tensor cov1, cov2;
    fit(a, mu1, cov1);
    fit(b, mu2, cov2);
    return frechet_distance(mu1, cov1, mu2, cov2);
}

}  // namespace

double fid(const std::vector<data::FrameGrid>& pred_frames,
           const std::vector<data::FrameGrid>& truth_frames, const FeatureExtractor& fx) {
    std::vector<std::vector<double>> a, b;
    a.reserve(pred_frames.size());
    b.reserve(truth_frames.size());
    for (const auto& f : pred_frames) a.push_back(fx.frame_features(f.values, f.mask));
    for (const auto& f : truth_frames) b.push_back(fx.frame_features(f.values, f.mask));
    return frechet_from_features(std::move(a), std::move(b), "fid");
}

double fvd(const std::vector<data::VideoClip>& pred_clips,
           const std::vector<data::VideoClip>& truth_clips, const FeatureExtractor& fx) {
    if (!pred_clips.empty() && !truth_clips.empty()) {
        const auto& p0 = pred_clips[0];
        for (const auto& c : truth_clips)
            if (c.length() != p0.length() || c.height() != p0.height() || c.width() != p0.width())
                throw std::invalid_argument("fvd: clips must share (T, H, W)");
    }
    std::vector<std::vector<double>> a, b;
    a.reserve(pred_clips.size());
    b.reserve(truth_clips.size());
    for (const auto& c : pred_clips) a.push_back(fx.clip_features(c));
    for (const auto& c : truth_clips) b.push_back(fx.clip_features(c));
    return frechet_from_features(std::move(a), std::move(b), "fvd");
}

}  // namespace cyclocast::metrics
