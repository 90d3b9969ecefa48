#include "uapatch/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "uapatch/errors.hpp"

namespace uapatch {

bool all_finite(const Tensor& t) {
    for (double x : t.v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool in_unit_range(const Tensor& t, double tol) {
    for (double x : t.v) {
        if (x < -tol || x > 1.0 + tol) return false;
    }
    return true;
}

void clamp01(Tensor& t) {
    for (double& x : t.v) x = std::clamp(x, 0.0, 1.0);
}

double min_value(const Tensor& t) {
    double m = t.v.empty() ? 0.0 : t.v[0];
    for (double x : t.v) m = std::min(m, x);
    return m;
}

double max_value(const Tensor& t) {
    double m = t.v.empty() ? 0.0 : t.v[0];
    for (double x : t.v) m = std::max(m, x);
    return m;
}

double mean_value(const Tensor& t) {
    if (t.v.empty()) return 0.0;
    double s = 0.0;
    for (double x : t.v) s += x;
    return s / static_cast<double>(t.v.size());
}

Tensor bilinear_resize(const Tensor& src, int out_h, int out_w) {
    if (src.empty() || out_h <= 0 || out_w <= 0)
        throw ShapeError("bilinear_resize: empty input or non-positive output size");
    if (src.h == out_h && src.w == out_w) return src;

    Tensor dst(src.c, out_h, out_w);
    const double sy = out_h > 1 ? static_cast<double>(src.h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(src.w - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        double fy = y * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, src.h - 1);
        double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = x * sx;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, src.w - 1);
            double wx = fx - x0;
            for (int ci = 0; ci < src.c; ++ci) {
                double top = src.at(ci, y0, x0) * (1.0 - wx) + src.at(ci, y0, x1) * wx;
                double bot = src.at(ci, y1, x0) * (1.0 - wx) + src.at(ci, y1, x1) * wx;
                dst.at(ci, y, x) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace uapatch
