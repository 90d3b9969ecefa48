#pragma once

#include <set>
#include <string>

#include "uapatch/rng.hpp"
#include "uapatch/tensor.hpp"

namespace uapatch {

enum class TransformKind { Rotation, Distortion, Affine };

TransformKind transform_kind_from_name(const std::string& s);
const char* transform_kind_name(TransformKind k);

// Sampling ranges for the robustness transforms. Defaults follow the
// deployment-style limits: rotation within +-30 degrees, radial distortion
// coefficient within [0, 0.1], affine rate within [0, 4] (normalized to up to
// 25% shear and 10% scale jitter).
struct TransformConfig {
    double rotation_lo = -30.0, rotation_hi = 30.0;    // degrees
    double distortion_lo = 0.0, distortion_hi = 0.1;   // radial coefficient
    double affine_lo = 0.0, affine_hi = 4.0;           // rate
    std::set<TransformKind> enabled = {TransformKind::Rotation, TransformKind::Distortion,
                                       TransformKind::Affine};
    int samples_per_step = 4;

    void validate(bool allow_extended_ranges = false) const;
    static TransformConfig single_kind(TransformKind k);
};

// One concrete draw. All parameters are recorded so an instance can be
// logged and replayed exactly.
struct TransformInstance {
    double angle_deg = 0.0;
    double distort_coeff = 0.0;
    double affine_rate = 0.0;
    double shear_dir = 0.0;  // in [-1, 1]
    double scale_dir = 0.0;  // in [-1, 1]

    double shear() const { return 0.25 * (affine_rate / 4.0) * shear_dir; }
    double scale() const { return 1.0 + 0.10 * (affine_rate / 4.0) * scale_dir; }
    bool is_identity() const;
    std::string describe() const;
};

TransformInstance sample_transform(const TransformConfig& config, Rng& rng);

// Differentiable warp of the (already patched) image: affine, then rotation
// about the image center, then radial distortion. Out-of-frame samples are
// filled with 0.5 gray; output is clamped to [0, 1]. An exact identity
// instance passes the input through bitwise.
Tensor apply_transform(const TransformInstance& inst, const Tensor& image);

// Adjoint of apply_transform's (linear) sampling operator: maps a gradient
// at the output back to a gradient at the input.
Tensor apply_transform_backward(const TransformInstance& inst, std::pair<int, int> image_hw,
                                const Tensor& grad_out);

}  // namespace uapatch
