#include "cyclocast/data/types.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclocast::data {

FrameGrid sanitize(const Tensor& raw) {
    if (raw.rank() != 2) throw std::invalid_argument("sanitize: expected rank-2 grid");
    FrameGrid g;
    g.values = Tensor(raw.shape());
    g.mask = Tensor(raw.shape());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (std::isnan(raw[i])) {
            g.values[i] = 0.0;
            g.mask[i] = 0.0;
        } else {
            g.values[i] = raw[i];
            g.mask[i] = 1.0;
        }
    }
    return g;
}

std::vector<VideoClip> assemble_clips(const std::vector<FrameGrid>& sequence,
                                      int clip_len, int stride) {
    if (clip_len < 1 || stride < 1)
        throw std::invalid_argument("assemble_clips: clip_len and stride must be >= 1");
    if (static_cast<int>(sequence.size()) < clip_len)
        throw std::invalid_argument("assemble_clips: sequence shorter than clip_len");

    const std::int64_t h = sequence[0].height();
    const std::int64_t w = sequence[0].width();

    std::vector<VideoClip> clips;
    for (std::size_t start = 0; start + clip_len <= sequence.size(); start += stride) {
        VideoClip c;
        c.frames = Tensor({clip_len, h, w});
        c.mask = Tensor({h, w});
        c.mask.fill(1.0);
        c.timestamps.resize(clip_len);
        for (int f = 0; f < clip_len; ++f) {
            const FrameGrid& g = sequence[start + f];
            if (g.height() != h || g.width() != w)
                throw std::invalid_argument("assemble_clips: inconsistent frame shapes");
            double* dst = c.frames.data() + static_cast<std::size_t>(f) * h * w;
            for (std::int64_t i = 0; i < h * w; ++i) {
                dst[i] = g.values[i];
                if (g.mask[i] == 0.0) c.mask[i] = 0.0;
            }
            c.timestamps[f] = static_cast<double>(f);
        }
        // Shared mask: zero every frame where any member frame was invalid.
        for (int f = 0; f < clip_len; ++f) {
            double* dst = c.frames.data() + static_cast<std::size_t>(f) * h * w;
            for (std::int64_t i = 0; i < h * w; ++i)
                if (c.mask[i] == 0.0) dst[i] = 0.0;
        }
        clips.push_back(std::move(c));
    }
    return clips;
}

double normalize_value(double v, const NormStats& s, std::uint64_t* clip_warnings) {
    if (s.max == s.min) throw std::invalid_argument("normalize: degenerate stats (max == min)");
    double u = (v - s.min) / (s.max - s.min) * 2.0 - 1.0;
    if (u < -1.0 || u > 1.0) {
        if (clip_warnings) ++*clip_warnings;
        u = u < -1.0 ? -1.0 : 1.0;
    }
    return u;
}

double denormalize_value(double v, const NormStats& s) {
    if (s.max == s.min) throw std::invalid_argument("denormalize: degenerate stats (max == min)");
    return (v + 1.0) * 0.5 * (s.max - s.min) + s.min;
}

void normalize(Tensor& values, const NormStats& s, std::uint64_t* clip_warnings) {
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = normalize_value(values[i], s, clip_warnings);
}

void denormalize(Tensor& values, const NormStats& s) {
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = denormalize_value(values[i], s);
}

}  // namespace cyclocast::data
