#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lodet {

struct PlotSeries {
    std::string label;
    std::vector<std::array<double, 2>> points;
    std::array<std::uint8_t, 3> color{31, 119, 180};
};

// Minimal line-plot renderer over the unit square (gridlines at 0.25 steps,
// point markers, polylines per series), written as an 8-bit RGB PNG.
void write_line_plot_png(const std::filesystem::path& path, const std::vector<PlotSeries>& series);

std::array<std::uint8_t, 3> plot_palette_color(std::size_t index);

}  // namespace lodet
