#pragma once

#include <string>
#include <utility>

#include "uapatch/rng.hpp"
#include "uapatch/tensor.hpp"

namespace uapatch {

enum class Provenance { White, Gaussian, HardExample, FusedPrior, Trained };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

inline constexpr double kDefaultAreaBudget = 0.0038;

// A small trainable RGB region plus identity metadata. Externally visible
// pixels are always in [0, 1]; construction enforces the area budget against
// the target image geometry (budget is rounded up to whole pixels).
struct Patch {
    Tensor pixels;  // (3, h, w)
    std::string id;
    Provenance provenance = Provenance::White;
    double area_budget = kDefaultAreaBudget;

    int height() const { return pixels.h; }
    int width() const { return pixels.w; }
};

Patch make_patch(Tensor pixels, std::string id, Provenance provenance,
                 std::pair<int, int> image_hw, double area_budget = kDefaultAreaBudget);

Patch make_white_patch(int h, int w, std::pair<int, int> image_hw,
                       double area_budget = kDefaultAreaBudget);
Patch make_gaussian_patch(int h, int w, std::pair<int, int> image_hw, Rng& rng,
                          double area_budget = kDefaultAreaBudget);

// Rectangle placement of a patch inside an (H, W) image. The equivalent
// binary location mask is 1 exactly on the rectangle. A zero-size rectangle
// is the degenerate empty placement (all-zero mask).
struct Placement {
    int top = 0;
    int left = 0;
    int patch_h = 0;
    int patch_w = 0;
    int image_h = 0;
    int image_w = 0;

    bool empty() const { return patch_h == 0 || patch_w == 0; }
    Tensor mask() const;  // (1, H, W) of {0, 1}

    static Placement empty_placement(std::pair<int, int> image_hw);
};

Placement make_placement(int top, int left, std::pair<int, int> patch_hw,
                         std::pair<int, int> image_hw);

enum class PlacementPolicy { FixedCenter, UniformRandom };

PlacementPolicy placement_policy_from_name(const std::string& s);
const char* placement_policy_name(PlacementPolicy p);

Placement sample_placement(Rng& rng, std::pair<int, int> image_hw, std::pair<int, int> patch_hw,
                           PlacementPolicy policy);

// x' = (1 - M) .* x + M .* patch. Pixels outside the mask are bitwise equal
// to the input; pixels inside equal the patch values.
Tensor apply_patch(const Tensor& image, const Patch& patch, const Placement& placement);

// Patch persistence: lossless PNG next to a JSON sidecar.
struct PatchMeta {
    std::string config_fingerprint;
    std::string created;
    std::string extra_json;  // optional module-specific fields (JSON object)
};

void save_patch(const Patch& patch, const std::string& png_path, const PatchMeta& meta);
Patch load_patch(const std::string& png_path, std::pair<int, int> image_hw);

}  // namespace uapatch
