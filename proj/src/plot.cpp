#include "uapatch/plot.hpp"

#include <algorithm>
#include <cmath>

#include "uapatch/errors.hpp"
#include "uapatch/png_io.hpp"

namespace uapatch {

namespace {

constexpr int kWidth = 480;
constexpr int kHeight = 320;
constexpr int kMargin = 40;

// 5x7 bitmap glyphs for the ASCII subset we need in titles/labels.
const char* glyph(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case 'A': return "01110100011000111111100011000110001";
        case 'B': return "11110100011000111110100011000111110";
        case 'C': return "01110100011000010000100001000101110";
        case 'D': return "11110100011000110001100011000111110";
        case 'E': return "11111100001000011110100001000011111";
        case 'F': return "11111100001000011110100001000010000";
        case 'G': return "01110100011000010111100011000101110";
        case 'H': return "10001100011000111111100011000110001";
        case 'I': return "01110001000010000100001000010001110";
        case 'J': return "00111000100001000010000101001001100";
        case 'K': return "10001100101010011000101001001010001";
        case 'L': return "10000100001000010000100001000011111";
        case 'M': return "10001110111010110001100011000110001";
        case 'N': return "10001110011010110011100011000110001";
        case 'O': return "01110100011000110001100011000101110";
        case 'P': return "11110100011000111110100001000010000";
        case 'Q': return "01110100011000110001101011001001101";
        case 'R': return "11110100011000111110101001001010001";
        case 'S': return "01111100000100000111000001000111110";
        case 'T': return "11111001000010000100001000010000100";
        case 'U': return "10001100011000110001100011000101110";
        case 'V': return "10001100011000110001100010101000100";
        case 'W': return "10001100011000110101101011101110001";
        case 'X': return "10001100010101000100010101000110001";
        case 'Y': return "10001100010101000100001000010000100";
        case 'Z': return "11111000010001000100010001000011111";
        case '0': return "01110100011001110101110011000101110";
        case '1': return "00100011000010000100001000010001110";
        case '2': return "01110100010000100010001000100011111";
        case '3': return "01110100010000100110000011000101110";
        case '4': return "00010001100101010010111110001000010";
        case '5': return "11111100001111000001000011000101110";
        case '6': return "01110100001000011110100011000101110";
        case '7': return "11111000010001000100010001000010000";
        case '8': return "01110100011000101110100011000101110";
        case '9': return "01110100011000101111000011000101110";
        case '.': return "00000000000000000000000000110001100";
        case '-': return "00000000000000011111000000000000000";
        case '_': return "00000000000000000000000000000011111";
        case '/': return "00001000010001000100010001000010000";
        case ':': return "00000011000110000000011000110000000";
        case '%': return "11001110010001000100010001001110011";
        case ' ': return nullptr;
        default: return nullptr;
    }
}

struct Canvas {
    Tensor img;
    Canvas() : img(3, kHeight, kWidth, 1.0) {}

    void px(int y, int x, double r, double g, double b) {
        if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
        img.at(0, y, x) = r;
        img.at(1, y, x) = g;
        img.at(2, y, x) = b;
    }

    void line(double x0, double y0, double x1, double y1, double r, double g, double b) {
        const int steps = static_cast<int>(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0))) + 1;
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            px(static_cast<int>(std::lround(y0 + t * (y1 - y0))),
               static_cast<int>(std::lround(x0 + t * (x1 - x0))), r, g, b);
        }
    }

    void rect_fill(int y0, int x0, int y1, int x1, double r, double g, double b) {
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) px(y, x, r, g, b);
    }

    void text(int y, int x, const std::string& s) {
        int cx = x;
        for (char c : s) {
            const char* g = glyph(c);
            if (g) {
                for (int gy = 0; gy < 7; ++gy)
                    for (int gx = 0; gx < 5; ++gx)
                        if (g[gy * 5 + gx] == '1') px(y + gy, cx + gx, 0.1, 0.1, 0.1);
            }
            cx += 6;
        }
    }
};

const double kPalette[6][3] = {{0.85, 0.2, 0.2},  {0.2, 0.35, 0.85}, {0.15, 0.6, 0.3},
                               {0.85, 0.55, 0.1}, {0.55, 0.25, 0.7}, {0.15, 0.6, 0.65}};

}  // namespace

void plot_lines(const std::string& png_path, const std::vector<Series>& series,
                const std::string& title) {
    if (series.empty()) throw ValidationError("plot_lines: no series");
    Canvas c;
    c.text(10, kMargin, title);

    double lo = 0.0, hi = 1e-9;
    std::size_t max_n = 2;
    for (const auto& s : series) {
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        max_n = std::max(max_n, s.values.size());
    }
    if (hi <= lo) hi = lo + 1.0;

    const int x0 = kMargin, x1 = kWidth - kMargin, y0 = kMargin, y1 = kHeight - kMargin;
    c.line(x0, y1, x1, y1, 0.3, 0.3, 0.3);
    c.line(x0, y0, x0, y1, 0.3, 0.3, 0.3);

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& vals = series[si].values;
        if (vals.size() < 2) continue;
        const double* col = kPalette[si % 6];
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            auto map_x = [&](std::size_t k) {
                return x0 + (x1 - x0) * static_cast<double>(k) / (max_n - 1);
            };
            auto map_y = [&](double v) { return y1 - (y1 - y0) * (v - lo) / (hi - lo); };
            c.line(map_x(i), map_y(vals[i]), map_x(i + 1), map_y(vals[i + 1]), col[0], col[1],
                   col[2]);
        }
        c.text(y0 + static_cast<int>(si) * 10, x1 - 150, series[si].label);
        c.rect_fill(y0 + static_cast<int>(si) * 10 + 2, x1 - 160, y0 + static_cast<int>(si) * 10 + 6,
                    x1 - 155, col[0], col[1], col[2]);
    }
    write_png(png_path, c.img);
}

void plot_bars(const std::string& png_path, const std::vector<std::pair<std::string, double>>& bars,
               const std::string& title) {
    if (bars.empty()) throw ValidationError("plot_bars: no bars");
    Canvas c;
    c.text(10, kMargin, title);

    double hi = 1e-9;
    for (const auto& [label, v] : bars) hi = std::max(hi, v);

    const int x0 = kMargin + 90, x1 = kWidth - kMargin, y0 = kMargin, y1 = kHeight - kMargin;
    const int slot = (y1 - y0) / static_cast<int>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double* col = kPalette[i % 6];
        const int by0 = y0 + static_cast<int>(i) * slot + 4;
        const int by1 = by0 + std::max(4, slot - 12);
        const int bx1 = x0 + static_cast<int>((x1 - x0) * bars[i].second / hi);
        c.rect_fill(by0, x0, by1, std::max(x0 + 1, bx1), col[0], col[1], col[2]);
        c.text(by0 + 2, kMargin, bars[i].first.substr(0, 14));
    }
    write_png(png_path, c.img);
}

}  // namespace uapatch
