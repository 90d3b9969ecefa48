#pragma once

#include <string>
#include <vector>

#include "uapatch/tensor.hpp"

namespace uapatch {

// Minimal deterministic chart rasterizer for report artifacts. Not a
// plotting library; just enough to eyeball training curves and prior
// rankings without external tooling.

struct Series {
    std::string label;
    std::vector<double> values;
};

// Line chart of one or more series over their index. Writes a PNG.
void plot_lines(const std::string& png_path, const std::vector<Series>& series,
                const std::string& title);

// Horizontal bar chart of labeled values. Writes a PNG.
void plot_bars(const std::string& png_path, const std::vector<std::pair<std::string, double>>& bars,
               const std::string& title);

}  // namespace uapatch
