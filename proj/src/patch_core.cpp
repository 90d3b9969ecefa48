#include "uapatch/patch_core.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "uapatch/errors.hpp"
#include "uapatch/png_io.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using json = nlohmann::json;

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::White: return "white";
        case Provenance::Gaussian: return "gaussian";
        case Provenance::HardExample: return "hard_example";
        case Provenance::FusedPrior: return "fused_prior";
        case Provenance::Trained: return "trained";
    }
    return "?";
}

Provenance provenance_from_name(const std::string& s) {
    if (s == "white") return Provenance::White;
    if (s == "gaussian") return Provenance::Gaussian;
    if (s == "hard_example") return Provenance::HardExample;
    if (s == "fused_prior") return Provenance::FusedPrior;
    if (s == "trained") return Provenance::Trained;
    throw ValidationError("unknown patch provenance '" + s + "'");
}

Patch make_patch(Tensor pixels, std::string id, Provenance provenance,
                 std::pair<int, int> image_hw, double area_budget) {
    if (pixels.c != 3 || pixels.h <= 0 || pixels.w <= 0)
        throw ShapeError("make_patch: patch pixels must be (3, h, w) with positive size");
    if (!all_finite(pixels)) throw ValidationError("make_patch: non-finite patch pixels");
    if (!in_unit_range(pixels)) throw ValidationError("make_patch: patch pixels outside [0, 1]");
    if (area_budget <= 0.0) throw ValidationError("make_patch: area budget must be positive");
    const auto [H, W] = image_hw;
    if (H <= 0 || W <= 0) throw ShapeError("make_patch: bad image size");
    // Budget in whole pixels, rounded up (0.38% of a 64x64 image is 15.6
    // pixels and admits a 4x4 patch).
    const double budget_px = std::ceil(area_budget * H * W - 1e-9);
    const double area = static_cast<double>(pixels.h) * pixels.w;
    if (area > budget_px)
        throw ValidationError("make_patch: patch area " + std::to_string(pixels.h) + "x" +
                              std::to_string(pixels.w) + " exceeds budget of " +
                              std::to_string(static_cast<long>(budget_px)) + " pixels (" +
                              std::to_string(area_budget) + " of " + std::to_string(H) + "x" +
                              std::to_string(W) + ")");
    Patch p;
    p.pixels = std::move(pixels);
    p.id = std::move(id);
    p.provenance = provenance;
    p.area_budget = area_budget;
    return p;
}

Patch make_white_patch(int h, int w, std::pair<int, int> image_hw, double area_budget) {
    return make_patch(Tensor(3, h, w, 1.0), "white", Provenance::White, image_hw, area_budget);
}

Patch make_gaussian_patch(int h, int w, std::pair<int, int> image_hw, Rng& rng,
                          double area_budget) {
    Tensor t(3, h, w);
    for (double& v : t.v) v = std::clamp(rng.normal(0.5, 0.15), 0.0, 1.0);
    return make_patch(std::move(t), "gaussian", Provenance::Gaussian, image_hw, area_budget);
}

Tensor Placement::mask() const {
    Tensor m(1, image_h, image_w, 0.0);
    for (int y = top; y < top + patch_h; ++y)
        for (int x = left; x < left + patch_w; ++x) m.at(0, y, x) = 1.0;
    return m;
}

Placement Placement::empty_placement(std::pair<int, int> image_hw) {
    Placement p;
    p.image_h = image_hw.first;
    p.image_w = image_hw.second;
    return p;
}

Placement make_placement(int top, int left, std::pair<int, int> patch_hw,
                         std::pair<int, int> image_hw) {
    const auto [ph, pw] = patch_hw;
    const auto [H, W] = image_hw;
    if (ph < 0 || pw < 0 || H <= 0 || W <= 0) throw ShapeError("make_placement: bad sizes");
    if (ph == 0 || pw == 0) return Placement::empty_placement(image_hw);
    if (top < 0 || left < 0 || top + ph > H || left + pw > W)
        throw PlacementError("placement rectangle (" + std::to_string(top) + "," +
                             std::to_string(left) + ")+" + std::to_string(ph) + "x" +
                             std::to_string(pw) + " falls outside " + std::to_string(H) + "x" +
                             std::to_string(W) + " image");
    Placement p;
    p.top = top;
    p.left = left;
    p.patch_h = ph;
    p.patch_w = pw;
    p.image_h = H;
    p.image_w = W;
    return p;
}

PlacementPolicy placement_policy_from_name(const std::string& s) {
    if (s == "fixed_center") return PlacementPolicy::FixedCenter;
    if (s == "uniform_random") return PlacementPolicy::UniformRandom;
    throw ValidationError("unknown placement policy '" + s + "'");
}

const char* placement_policy_name(PlacementPolicy p) {
    return p == PlacementPolicy::FixedCenter ? "fixed_center" : "uniform_random";
}

Placement sample_placement(Rng& rng, std::pair<int, int> image_hw, std::pair<int, int> patch_hw,
                           PlacementPolicy policy) {
    const auto [H, W] = image_hw;
    const auto [ph, pw] = patch_hw;
    if (ph > H || pw > W)
        throw ValidationError("sample_placement: patch larger than image");
    if (policy == PlacementPolicy::FixedCenter)
        return make_placement((H - ph) / 2, (W - pw) / 2, patch_hw, image_hw);
    const int top = rng.uniform_int(0, H - ph);
    const int left = rng.uniform_int(0, W - pw);
    return make_placement(top, left, patch_hw, image_hw);
}

Tensor apply_patch(const Tensor& image, const Patch& patch, const Placement& placement) {
    if (image.c != 3) throw ShapeError("apply_patch: image must have 3 channels");
    if (placement.image_h != image.h || placement.image_w != image.w)
        throw ShapeError("apply_patch: placement image size does not match image");
    if (placement.empty()) return image;
    if (placement.patch_h != patch.height() || placement.patch_w != patch.width())
        throw ShapeError("apply_patch: placement rectangle does not match patch shape");
    if (placement.top + placement.patch_h > image.h ||
        placement.left + placement.patch_w > image.w)
        throw PlacementError("apply_patch: placement outside image bounds");

    Tensor out = image;
    for (int ci = 0; ci < 3; ++ci)
        for (int y = 0; y < patch.height(); ++y)
            for (int x = 0; x < patch.width(); ++x)
                out.at(ci, placement.top + y, placement.left + x) = patch.pixels.at(ci, y, x);
    return out;
}

void save_patch(const Patch& patch, const std::string& png_path, const PatchMeta& meta) {
    write_png(png_path, patch.pixels);
    json side;
    side["id"] = patch.id;
    side["provenance"] = provenance_name(patch.provenance);
    side["area_budget"] = patch.area_budget;
    side["config_fingerprint"] = meta.config_fingerprint;
    side["created"] = meta.created.empty() ? iso8601_now() : meta.created;
    if (!meta.extra_json.empty()) side["extra"] = json::parse(meta.extra_json);
    write_text_file(png_path + ".json", side.dump(2) + "\n");
}

Patch load_patch(const std::string& png_path, std::pair<int, int> image_hw) {
    Tensor pixels = read_png(png_path);
    json side = json::parse(read_text_file(png_path + ".json"));
    return make_patch(std::move(pixels), side.at("id").get<std::string>(),
                      provenance_from_name(side.at("provenance").get<std::string>()), image_hw,
                      side.at("area_budget").get<double>());
}

}  // namespace uapatch
