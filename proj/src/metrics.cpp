#include "cyclocast/metrics/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclocast::metrics {

namespace {

void check_pair(const data::VideoClip& pred, const data::VideoClip& truth, const char* what) {
    pred.frames.require_shape(truth.frames, what);
    pred.mask.require_shape(truth.mask, what);
    for (std::size_t i = 0; i < pred.mask.size(); ++i)
        if (pred.mask[i] != truth.mask[i])
            throw std::invalid_argument(std::string(what) + ": mask mismatch");
}

std::size_t count_valid(const Tensor& mask) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0) ++n;
    return n;
}

}  // namespace

double mae(const data::VideoClip& pred, const data::VideoClip& truth) {
    check_pair(pred, truth, "mae");
    const std::size_t hw = pred.mask.size();
    const std::size_t valid = count_valid(pred.mask);
    if (valid == 0) throw std::invalid_argument("mae: all-invalid mask");

    double acc = 0.0;
    const std::size_t T = static_cast<std::size_t>(pred.length());
    for (std::size_t f = 0; f < T; ++f) {
        const double* a = pred.frames.data() + f * hw;
        const double* b = truth.frames.data() + f * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (pred.mask[i] != 0.0) acc += std::fabs(a[i] - b[i]);
    }
    return acc / (static_cast<double>(valid) * static_cast<double>(T));
}

double psnr(const data::VideoClip& pred, const data::VideoClip& truth, double data_range) {
    if (data_range <= 0.0) throw std::invalid_argument("psnr: data_range must be > 0");
    check_pair(pred, truth, "psnr");
    const std::size_t hw = pred.mask.size();
    const std::size_t valid = count_valid(pred.mask);
    if (valid == 0) throw std::invalid_argument("psnr: all-invalid mask");

    double acc = 0.0;
    const std::size_t T = static_cast<std::size_t>(pred.length());
    for (std::size_t f = 0; f < T; ++f) {
        const double* a = pred.frames.data() + f * hw;
        const double* b = truth.frames.data() + f * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (pred.mask[i] != 0.0) {
                const double d = a[i] - b[i];
                acc += d * d;
            }
    }
    const double mse = acc / (static_cast<double>(valid) * static_cast<double>(T));
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

namespace {

constexpr int kWin = 7;

// 7x7 Gaussian window, sigma 1.5, normalized to sum 1.
const double* ssim_window() {
    static double w[kWin * kWin];
    static bool init = [] {
        double sum = 0.0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - kWin / 2, dx = x - kWin / 2;
                w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                sum += w[y * kWin + x];
            }
        for (double& v : w) v /= sum;
        return true;
    }();
    (void)init;
    return w;
}

}  // namespace

double ssim_frame(const Tensor& pred, const Tensor& truth, const Tensor& mask,
                  double data_range) {
    pred.require_shape(truth, "ssim");
    if (mask.size() != 0) pred.require_shape(mask, "ssim (mask)");
    const std::int64_t h = pred.dim(0), w = pred.dim(1);
    if (h < kWin || w < kWin) throw std::invalid_argument("ssim: frame smaller than window");

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    const double* win = ssim_window();

    double acc = 0.0;
    std::size_t n_windows = 0;
    for (std::int64_t y0 = 0; y0 + kWin <= h; ++y0) {
        for (std::int64_t x0 = 0; x0 + kWin <= w; ++x0) {
            bool all_valid = true;
            if (mask.size() != 0) {
                for (int y = 0; y < kWin && all_valid; ++y)
                    for (int x = 0; x < kWin; ++x)
                        if (mask[(y0 + y) * w + (x0 + x)] == 0.0) {
                            all_valid = false;
                            break;
                        }
            }
            if (!all_valid) continue;

            double mu_a = 0.0, mu_b = 0.0;
            for (int y = 0; y < kWin; ++y)
                for (int x = 0; x < kWin; ++x) {
                    const double g = win[y * kWin + x];
                    mu_a += g * pred[(y0 + y) * w + (x0 + x)];
                    mu_b += g * truth[(y0 + y) * w + (x0 + x)];
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int y = 0; y < kWin; ++y)
                for (int x = 0; x < kWin; ++x) {
                    const double g = win[y * kWin + x];
                    const double da = pred[(y0 + y) * w + (x0 + x)] - mu_a;
                    const double db = truth[(y0 + y) * w + (x0 + x)] - mu_b;
                    var_a += g * da * da;
                    var_b += g * db * db;
                    cov += g * da * db;
                }
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++n_windows;
        }
    }
    if (n_windows == 0) throw std::invalid_argument("ssim: no fully valid window");
    return acc / static_cast<double>(n_windows);
}

double ssim(const data::VideoClip& pred, const data::VideoClip& truth, double data_range) {
    check_pair(pred, truth, "ssim");
    const std::int64_t T = pred.length();
    const std::size_t hw = pred.mask.size();
    double acc = 0.0;
    for (std::int64_t f = 0; f < T; ++f) {
        Tensor a({pred.height(), pred.width()});
        Tensor b({pred.height(), pred.width()});
        std::copy_n(pred.frames.data() + f * hw, hw, a.data());
        std::copy_n(truth.frames.data() + f * hw, hw, b.data());
        acc += ssim_frame(a, b, pred.mask, data_range);
    }
    return acc / static_cast<double>(T);
}

}  // namespace cyclocast::metrics
