#include "cyclocast/io/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cyclocast::io {

namespace fs = std::filesystem;

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write: " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    fs::rename(tmp, path);
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

namespace {

struct Canvas {
    int w, h;
    std::vector<unsigned char> px;  // rgb

    Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 255) {}

    void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
        px[i] = r;
        px[i + 1] = g;
        px[i + 2] = b;
    }

    void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, r, g, b);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    }
};

}  // namespace

void render_chart_ppm(const fs::path& path, const Chart& chart, int width, int height) {
    constexpr int margin = 32;
    Canvas c(width, height);

    // Axes.
    c.line(margin, height - margin, width - margin / 2, height - margin, 0, 0, 0);
    c.line(margin, margin / 2, margin, height - margin, 0, 0, 0);

    std::size_t n = 0;
    for (const auto& s : chart.series) n = std::max(n, s.y.size());
    if (n < 1) n = 1;

    const double x_span = static_cast<double>(width - margin - margin / 2);
    const double y_span = static_cast<double>(height - margin - margin / 2);
    const double y_range = std::max(1e-12, chart.y_max - chart.y_min);
    auto to_px = [&](double hour, double v, int* x, int* y) {
        *x = margin + static_cast<int>(std::lround((hour - 1.0) / std::max<double>(1, n - 1) * x_span));
        *y = height - margin - static_cast<int>(std::lround((v - chart.y_min) / y_range * y_span));
    };

    // Horizontal gridlines every 0.25 of the range.
    for (int gl = 1; gl <= 3; ++gl) {
        const int gy = height - margin - static_cast<int>(std::lround(gl * 0.25 * y_span));
        for (int x = margin; x < width - margin / 2; x += 4) c.set(x, gy, 220, 220, 220);
    }

    for (const auto& s : chart.series) {
        int px = 0, py = 0;
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            int x, y;
            to_px(static_cast<double>(i + 1), std::clamp(s.y[i], chart.y_min, chart.y_max), &x, &y);
            if (i > 0) c.line(px, py, x, y, s.r, s.g, s.b);
            px = x;
            py = y;
        }
    }

    // Dashed vertical marker at the minimum-SSIM hour.
    if (chart.marker_x > 0) {
        int mx, unused;
        to_px(chart.marker_x, chart.y_min, &mx, &unused);
        for (int y = margin / 2; y < height - margin; y += 6)
            c.line(mx, y, mx, std::min(y + 3, height - margin), 200, 30, 30);
    }

    std::string bytes = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    bytes.append(reinterpret_cast<const char*>(c.px.data()), c.px.size());
    write_text_atomic(path, bytes);
}

}  // namespace cyclocast::io
