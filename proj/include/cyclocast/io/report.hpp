#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cyclocast::io {

// Atomic text write (temp then rename), used for every CSV artifact.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Fixed-format float for CSV output; deterministic across runs.
std::string csv_num(double v);

// Minimal raster line chart, written as binary PPM. The CSV plot data is the
// contract; these images are convenience.
struct ChartSeries {
    std::vector<double> y;          // x is the 1-based index (hours)
    unsigned char r = 30, g = 60, b = 200;
};

struct Chart {
    std::string title;
    std::vector<ChartSeries> series;
    double marker_x = -1;  // dashed vertical marker (hour), < 0 = none
    double y_min = 0.0, y_max = 1.0;
};

void render_chart_ppm(const std::filesystem::path& path, const Chart& chart, int width = 640,
                      int height = 400);

}  // namespace cyclocast::io
