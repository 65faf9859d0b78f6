#include "lodet/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <zlib.h>

#include "lodet/errors.hpp"
#include "lodet/io_formats.hpp"

namespace lodet {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMargin = 48;

struct Canvas {
    std::vector<std::uint8_t> rgb;

    Canvas() : rgb(static_cast<std::size_t>(kWidth) * kHeight * 3, 255) {}

    void set(int x, int y, const std::array<std::uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= kWidth || y >= kHeight) return;
        auto* p = &rgb[(static_cast<std::size_t>(y) * kWidth + x) * 3];
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }

    void line(int x0, int y0, int x1, int y1, const std::array<std::uint8_t, 3>& c) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            set(x0, y0, c);
            set(x0 + 1, y0, c);  // 2px stroke
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void marker(int x, int y, const std::array<std::uint8_t, 3>& c) {
        for (int dy = -2; dy <= 2; ++dy) {
            for (int dx = -2; dx <= 2; ++dx) set(x + dx, y + dy, c);
        }
    }
};

void append_u32_be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
    append_u32_be(out, static_cast<std::uint32_t>(data.size()));
    out.append(type, 4);
    out += data;
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()),
                static_cast<uInt>(data.size()));
    append_u32_be(out, crc);
}

std::string encode_png(const Canvas& canvas) {
    std::string out("\x89PNG\r\n\x1a\n", 8);

    std::string ihdr;
    append_u32_be(ihdr, kWidth);
    append_u32_be(ihdr, kHeight);
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);

    // Filter byte 0 per scanline.
    std::string raw;
    raw.reserve(static_cast<std::size_t>(kHeight) * (1 + kWidth * 3));
    for (int y = 0; y < kHeight; ++y) {
        raw.push_back(0);
        raw.append(reinterpret_cast<const char*>(&canvas.rgb[static_cast<std::size_t>(y) * kWidth * 3]),
                   static_cast<std::size_t>(kWidth) * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string idat(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  6) != Z_OK) {
        throw InternalError("plot: zlib compression failed");
    }
    idat.resize(bound);
    append_chunk(out, "IDAT", idat);
    append_chunk(out, "IEND", "");
    return out;
}

int px(double x) {
    return kMargin + static_cast<int>(std::lround(x * (kWidth - 2 * kMargin)));
}
int py(double y) {
    return kHeight - kMargin - static_cast<int>(std::lround(y * (kHeight - 2 * kMargin)));
}

}  // namespace

std::array<std::uint8_t, 3> plot_palette_color(std::size_t index) {
    static const std::array<std::uint8_t, 3> palette[] = {
        {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
        {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}};
    return palette[index % (sizeof(palette) / sizeof(palette[0]))];
}

void write_line_plot_png(const std::filesystem::path& path,
                         const std::vector<PlotSeries>& series) {
    Canvas canvas;
    const std::array<std::uint8_t, 3> grid{220, 220, 220};
    const std::array<std::uint8_t, 3> axis{0, 0, 0};
    for (int k = 1; k < 4; ++k) {
        const double v = k * 0.25;
        canvas.line(px(v), py(0), px(v), py(1), grid);
        canvas.line(px(0), py(v), px(1), py(v), grid);
    }
    canvas.line(px(0), py(0), px(1), py(0), axis);
    canvas.line(px(0), py(0), px(0), py(1), axis);
    canvas.line(px(1), py(0), px(1), py(1), axis);
    canvas.line(px(0), py(1), px(1), py(1), axis);

    for (const auto& s : series) {
        auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
        for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
            canvas.line(px(clamp01(s.points[i][0])), py(clamp01(s.points[i][1])),
                        px(clamp01(s.points[i + 1][0])), py(clamp01(s.points[i + 1][1])), s.color);
        }
        for (const auto& p : s.points) {
            canvas.marker(px(clamp01(p[0])), py(clamp01(p[1])), s.color);
        }
    }
    atomic_write_file(path, encode_png(canvas));
}

}  // namespace lodet
