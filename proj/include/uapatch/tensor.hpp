#pragma once

#include <cstddef>
#include <vector>

namespace uapatch {

// Dense channel-major (c, h, w) array of doubles. Images are c == 3 with
// values in [0, 1]; feature maps use whatever channel count the layer has.
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

    double& at(int ci, int yi, int xi) {
        return v[(static_cast<std::size_t>(ci) * h + yi) * w + xi];
    }
    double at(int ci, int yi, int xi) const {
        return v[(static_cast<std::size_t>(ci) * h + yi) * w + xi];
    }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
    bool empty() const { return v.empty(); }
};

bool all_finite(const Tensor& t);
bool in_unit_range(const Tensor& t, double tol = 0.0);
void clamp01(Tensor& t);
double min_value(const Tensor& t);
double max_value(const Tensor& t);
double mean_value(const Tensor& t);

// Bilinear resize (align-corners mapping; degenerate axes replicate).
Tensor bilinear_resize(const Tensor& src, int out_h, int out_w);

// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace uapatch
