#pragma once

#include <cstdint>
#include <vector>

#include "cyclocast/core/tensor.hpp"
#include "cyclocast/data/types.hpp"

namespace cyclocast::metrics {

// Mean absolute difference over valid pixels of all frames.
double mae(const data::VideoClip& pred, const data::VideoClip& truth);

// 10*log10(data_range^2 / MSE) over valid pixels; zero MSE returns the cap.
inline constexpr double kPsnrCap = 100.0;
double psnr(const data::VideoClip& pred, const data::VideoClip& truth, double data_range);

// Mean local SSIM over 7x7 Gaussian-weighted windows (sigma 1.5,
// C1=(0.01 L)^2, C2=(0.03 L)^2). Windows containing any invalid pixel are
// excluded. Throws if the frame is smaller than the window or no window is
// fully valid.
double ssim_frame(const Tensor& pred, const Tensor& truth, const Tensor& mask,
                  double data_range = 2.0);

// Mean of per-frame SSIM over the clip.
double ssim(const data::VideoClip& pred, const data::VideoClip& truth, double data_range = 2.0);

// Squared Frechet distance between two Gaussians:
//   |mu1-mu2|^2 + tr(cov1 + cov2 - 2 (cov1 cov2)^{1/2})
// Square roots go through symmetric eigendecompositions with negative
// eigenvalues clamped to zero; the result is clamped to >= 0. Throws if a
// covariance is asymmetric beyond 1e-8.
double frechet_distance(const std::vector<double>& mu1, const Tensor& cov1,
                        const std::vector<double>& mu2, const Tensor& cov2);

// Fixed-seed random-weight feature extractors. Weights are a pure function
// of the seed and are never trained; Frechet distances computed from them
// are reproducible but not comparable to published FID/FVD numbers.
struct FeatureExtractorConfig {
    std::uint64_t seed = 7;
    int frame_feature_dim = 64;
    int clip_feature_dim = 128;
};

class FeatureExtractor {
public:
    explicit FeatureExtractor(const FeatureExtractorConfig& cfg);

    // Spatial stack only: 3 stride-2 tanh conv levels, global mean pool.
    std::vector<double> frame_features(const Tensor& frame, const Tensor& mask) const;

    // Spatial stack per frame, then 2 temporal convolutions and a global
    // pool, so temporal order changes the features.
    std::vector<double> clip_features(const data::VideoClip& clip) const;

    const FeatureExtractorConfig& config() const { return cfg_; }

private:
    FeatureExtractorConfig cfg_;
    // conv weights: [level] -> (out, in, 3, 3) plus bias
    std::vector<Tensor> spatial_w_, spatial_b_;
    std::vector<Tensor> temporal_w_, temporal_b_;  // (out, in, 3) plus bias
    Tensor frame_proj_w_, frame_proj_b_;           // (frame_dim, spatial_out)

    std::vector<double> spatial_stack(const Tensor& frame, const Tensor& mask,
                                      std::vector<double>* pooled_map, int* out_h,
                                      int* out_w) const;
};

// Gaussian fit + frechet_distance over per-frame features. Requires more
// than feature_dim samples per side; covariance gets a 1e-6 diagonal
// regularizer. Features are sorted canonically first, so the result is
// bit-identical under any permutation of the inputs.
double fid(const std::vector<data::FrameGrid>& pred_frames,
           const std::vector<data::FrameGrid>& truth_frames, const FeatureExtractor& fx);

// Same over whole-clip features.
double fvd(const std::vector<data::VideoClip>& pred_clips,
           const std::vector<data::VideoClip>& truth_clips, const FeatureExtractor& fx);

struct MetricReport {
    double mae = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double fid = 0.0;
    double fvd = 0.0;
    std::size_t n_clips = 0;
};

}  // namespace cyclocast::metrics
