#include "uapatch/transforms.hpp"

#include <cmath>
#include <sstream>

#include "uapatch/errors.hpp"

namespace uapatch {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFillGray = 0.5;

struct WarpMap {
    double cx, cy, corner_r;
    double cos_t, sin_t;       // inverse rotation
    double inv_scale, shear;   // inverse affine
    double k;                  // distortion coefficient

    // Source coordinates for an output pixel.
    void source(double xo, double yo, double& sx, double& sy) const {
        double dx = xo - cx, dy = yo - cy;
        // radial distortion (inverse-map form)
        const double r2 = (dx * dx + dy * dy) / (corner_r * corner_r);
        const double f = 1.0 + k * r2;
        dx *= f;
        dy *= f;
        // inverse rotation
        const double rx = cos_t * dx + sin_t * dy;
        const double ry = -sin_t * dx + cos_t * dy;
        // inverse affine: A = scale * [[1, shear], [0, 1]]
        const double ax = inv_scale * (rx - shear * ry);
        const double ay = inv_scale * ry;
        sx = cx + ax;
        sy = cy + ay;
    }
};

WarpMap make_warp(const TransformInstance& inst, int h, int w) {
    WarpMap m{};
    m.cx = (w - 1) / 2.0;
    m.cy = (h - 1) / 2.0;
    m.corner_r = std::max(std::hypot(m.cx, m.cy), 1e-9);
    const double theta = inst.angle_deg * kPi / 180.0;
    m.cos_t = std::cos(theta);
    m.sin_t = std::sin(theta);
    const double s = inst.scale();
    if (s <= 0.0) throw ValidationError("apply_transform: non-positive scale");
    m.inv_scale = 1.0 / s;
    m.shear = inst.shear();
    m.k = inst.distort_coeff;
    return m;
}

}  // namespace

TransformKind transform_kind_from_name(const std::string& s) {
    if (s == "rotation") return TransformKind::Rotation;
    if (s == "distortion") return TransformKind::Distortion;
    if (s == "affine") return TransformKind::Affine;
    throw ValidationError("unknown transform kind '" + s + "'");
}

const char* transform_kind_name(TransformKind k) {
    switch (k) {
        case TransformKind::Rotation: return "rotation";
        case TransformKind::Distortion: return "distortion";
        case TransformKind::Affine: return "affine";
    }
    return "?";
}

void TransformConfig::validate(bool allow_extended_ranges) const {
    if (samples_per_step < 1)
        throw ValidationError("transforms: samples_per_step must be >= 1");
    if (rotation_lo > rotation_hi || distortion_lo > distortion_hi || affine_lo > affine_hi)
        throw ValidationError("transforms: empty parameter range");
    if (!allow_extended_ranges) {
        if (rotation_lo < -30.0 || rotation_hi > 30.0)
            throw ValidationError("transforms: rotation range outside [-30, 30]");
        if (distortion_lo < 0.0 || distortion_hi > 0.1)
            throw ValidationError("transforms: distortion range outside [0, 0.1]");
        if (affine_lo < 0.0 || affine_hi > 4.0)
            throw ValidationError("transforms: affine range outside [0, 4]");
    }
}

TransformConfig TransformConfig::single_kind(TransformKind k) {
    TransformConfig cfg;
    cfg.enabled = {k};
    return cfg;
}

bool TransformInstance::is_identity() const {
    return angle_deg == 0.0 && distort_coeff == 0.0 && (shear() == 0.0 && scale() == 1.0);
}

std::string TransformInstance::describe() const {
    std::ostringstream ss;
    ss << "rot=" << angle_deg << " distort=" << distort_coeff << " affine=" << affine_rate
       << " shear_dir=" << shear_dir << " scale_dir=" << scale_dir;
    return ss.str();
}

TransformInstance sample_transform(const TransformConfig& config, Rng& rng) {
    if (config.enabled.empty())
        throw ValidationError("sample_transform: no transform kinds enabled");
    TransformInstance inst;
    if (config.enabled.count(TransformKind::Rotation))
        inst.angle_deg = rng.uniform(config.rotation_lo, config.rotation_hi);
    if (config.enabled.count(TransformKind::Distortion))
        inst.distort_coeff = rng.uniform(config.distortion_lo, config.distortion_hi);
    if (config.enabled.count(TransformKind::Affine)) {
        inst.affine_rate = rng.uniform(config.affine_lo, config.affine_hi);
        inst.shear_dir = rng.uniform(-1.0, 1.0);
        inst.scale_dir = rng.uniform(-1.0, 1.0);
    }
    return inst;
}

Tensor apply_transform(const TransformInstance& inst, const Tensor& image) {
    if (image.c != 3 || image.h <= 0 || image.w <= 0)
        throw ShapeError("apply_transform: expected (3, h, w) image");
    if (inst.is_identity()) return image;

    const WarpMap m = make_warp(inst, image.h, image.w);
    Tensor out(image.c, image.h, image.w);
    for (int yo = 0; yo < image.h; ++yo) {
        for (int xo = 0; xo < image.w; ++xo) {
            double sx, sy;
            m.source(xo, yo, sx, sy);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int ci = 0; ci < image.c; ++ci) {
                double acc = 0.0;
                for (int t = 0; t < 4; ++t) {
                    const bool inside =
                        xs[t] >= 0 && xs[t] < image.w && ys[t] >= 0 && ys[t] < image.h;
                    acc += wts[t] * (inside ? image.at(ci, ys[t], xs[t]) : kFillGray);
                }
                out.at(ci, yo, xo) = std::clamp(acc, 0.0, 1.0);
            }
        }
    }
    return out;
}

Tensor apply_transform_backward(const TransformInstance& inst, std::pair<int, int> image_hw,
                                const Tensor& grad_out) {
    const auto [h, w] = image_hw;
    if (grad_out.c != 3 || grad_out.h != h || grad_out.w != w)
        throw ShapeError("apply_transform_backward: gradient shape mismatch");
    if (inst.is_identity()) return grad_out;

    const WarpMap m = make_warp(inst, h, w);
    Tensor gin(3, h, w, 0.0);
    for (int yo = 0; yo < h; ++yo) {
        for (int xo = 0; xo < w; ++xo) {
            double sx, sy;
            m.source(xo, yo, sx, sy);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int t = 0; t < 4; ++t) {
                if (xs[t] < 0 || xs[t] >= w || ys[t] < 0 || ys[t] >= h) continue;
                for (int ci = 0; ci < 3; ++ci)
                    gin.at(ci, ys[t], xs[t]) += wts[t] * grad_out.at(ci, yo, xo);
            }
        }
    }
    return gin;
}

}  // namespace uapatch
