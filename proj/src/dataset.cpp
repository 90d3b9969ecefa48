#include "uapatch/dataset.hpp"

#include <cmath>

#include "uapatch/errors.hpp"
#include "uapatch/rng.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ColorPair {
    double a[3];
    double b[3];
};

ColorPair draw_colors(Rng& rng) {
    ColorPair cp;
    for (int i = 0; i < 3; ++i) cp.a[i] = rng.uniform();
    for (int i = 0; i < 3; ++i) cp.b[i] = rng.uniform();
    double contrast = 0.0;
    for (int i = 0; i < 3; ++i) contrast = std::max(contrast, std::fabs(cp.a[i] - cp.b[i]));
    // Mostly well-contrasted pairs; the occasional washed-out image is kept
    // on purpose as a genuinely hard item.
    if (contrast < 0.25 && rng.uniform() < 0.8) {
        for (int i = 0; i < 3; ++i) cp.b[i] = rng.uniform();
    }
    return cp;
}

}  // namespace

const std::vector<std::string>& texture_class_names() {
    static const std::vector<std::string> names = {
        "h_stripes", "v_stripes", "d_stripes", "checker", "dots",
        "rings",     "blotches",  "grid",      "speckle", "gradient"};
    return names;
}

LabeledImage make_texture_image(const DatasetSpec& spec, const std::string& split, int index) {
    const int H = spec.image_hw, W = spec.image_hw;
    const int label = index % kTextureClassCount;

    std::string key = spec.name + "/" + split + "/" + std::to_string(index);
    Rng rng(spec.seed ^ fnv1a64(key));

    ColorPair cp = draw_colors(rng);
    const double noise = rng.uniform(spec.noise_lo, spec.noise_hi);

    // Per-class pattern parameters.
    const double freq = rng.uniform(3.0, 6.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const int cell = rng.uniform_int(4, 7);
    const int line_w = rng.uniform_int(1, 2);
    const double cx = rng.uniform(0.25, 0.75) * W;
    const double cy = rng.uniform(0.25, 0.75) * H;
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double speckle_p = rng.uniform(0.2, 0.5);
    const int phase_x = rng.uniform_int(0, cell - 1);
    const int phase_y = rng.uniform_int(0, cell - 1);

    // Blotch field: a few random low-frequency plane waves, thresholded.
    double bw_kx[4], bw_ky[4], bw_ph[4];
    for (int i = 0; i < 4; ++i) {
        bw_kx[i] = rng.uniform(-2.5, 2.5);
        bw_ky[i] = rng.uniform(-2.5, 2.5);
        bw_ph[i] = rng.uniform(0.0, 2.0 * kPi);
    }

    Tensor img(3, H, W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double u = static_cast<double>(x) / W;
            const double v = static_cast<double>(y) / H;
            double s = 0.0;
            switch (label) {
                case 0:  // horizontal stripes
                    s = 0.5 + 0.5 * std::sin(2.0 * kPi * freq * v + phase);
                    break;
                case 1:  // vertical stripes
                    s = 0.5 + 0.5 * std::sin(2.0 * kPi * freq * u + phase);
                    break;
                case 2:  // diagonal stripes
                    s = 0.5 + 0.5 * std::sin(2.0 * kPi * freq * (u + v) + phase);
                    break;
                case 3:  // checkerboard
                    s = (((x + phase_x) / cell + (y + phase_y) / cell) % 2 == 0) ? 0.0 : 1.0;
                    break;
                case 4: {  // dot lattice
                    const int lx = (x + phase_x) % cell, ly = (y + phase_y) % cell;
                    const double r = cell * 0.32;
                    const double dx = lx - cell / 2.0, dy = ly - cell / 2.0;
                    s = (dx * dx + dy * dy <= r * r) ? 1.0 : 0.0;
                    break;
                }
                case 5: {  // concentric rings
                    const double r = std::hypot(x - cx, y - cy);
                    s = 0.5 + 0.5 * std::sin(2.0 * kPi * r / (cell + 1.0) + phase);
                    break;
                }
                case 6: {  // thresholded blotches
                    double f = 0.0;
                    for (int i = 0; i < 4; ++i)
                        f += std::sin(2.0 * kPi * (bw_kx[i] * u + bw_ky[i] * v) + bw_ph[i]);
                    s = f > 0.0 ? 1.0 : 0.0;
                    break;
                }
                case 7: {  // grid lines
                    const bool on_line =
                        (x + phase_x) % cell < line_w || (y + phase_y) % cell < line_w;
                    s = on_line ? 1.0 : 0.0;
                    break;
                }
                case 8:  // binary speckle
                    s = rng.uniform() < speckle_p ? 1.0 : 0.0;
                    break;
                case 9: {  // linear gradient
                    const double proj = (u - 0.5) * std::cos(theta) + (v - 0.5) * std::sin(theta);
                    s = std::clamp(proj / 1.0 + 0.5, 0.0, 1.0);
                    break;
                }
                default: break;
            }
            for (int ci = 0; ci < 3; ++ci) {
                double val = cp.a[ci] + (cp.b[ci] - cp.a[ci]) * s + rng.normal(0.0, noise);
                img.at(ci, y, x) = std::clamp(val, 0.0, 1.0);
            }
        }
    }
    return {std::move(img), label};
}

std::vector<LabeledImage> make_texture_split(const DatasetSpec& spec, const std::string& split) {
    if (spec.name != "textures10")
        throw ValidationError("unknown dataset '" + spec.name +
                              "'; the built-in synthetic dataset is 'textures10'");
    int per_class = 0;
    if (split == "train")
        per_class = spec.train_per_class;
    else if (split == "test")
        per_class = spec.test_per_class;
    else
        throw ValidationError("unknown split '" + split + "' (expected train or test)");
    if (per_class <= 0) throw ValidationError("dataset split size must be positive");

    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(per_class) * kTextureClassCount);
    for (int i = 0; i < per_class * kTextureClassCount; ++i)
        out.push_back(make_texture_image(spec, split, i));
    return out;
}

}  // namespace uapatch
