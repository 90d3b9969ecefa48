#include <doctest.h>

#include <filesystem>

#include "uapatch/errors.hpp"
#include "uapatch/patch_core.hpp"
#include "uapatch/png_io.hpp"
#include "uapatch/rng.hpp"

using namespace uapatch;

namespace {

Tensor random_image(int h, int w, Rng& rng) {
    Tensor t(3, h, w);
    for (double& v : t.v) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("empty placement leaves the image bitwise unchanged") {
    Rng rng(1);
    Tensor img = random_image(8, 8, rng);
    Patch p = make_white_patch(2, 2, {8, 8}, 1.0);
    Tensor out = apply_patch(img, p, Placement::empty_placement({8, 8}));
    for (std::size_t i = 0; i < img.v.size(); ++i) CHECK(out.v[i] == img.v[i]);
}

TEST_CASE("whole-image patch equal to the image is a no-op") {
    Rng rng(2);
    Tensor img = random_image(6, 6, rng);
    Patch p = make_patch(img, "self", Provenance::HardExample, {6, 6}, 1.0);
    Placement pl = make_placement(0, 0, {6, 6}, {6, 6});
    Tensor out = apply_patch(img, p, pl);
    for (std::size_t i = 0; i < img.v.size(); ++i) CHECK(out.v[i] == img.v[i]);
}

TEST_CASE("2x2 white patch on gray 4x4 image sets exactly the corner block") {
    Tensor img(3, 4, 4, 0.5);
    Patch p = make_white_patch(2, 2, {4, 4}, 1.0);
    Tensor out = apply_patch(img, p, make_placement(0, 0, {2, 2}, {4, 4}));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                if (y <= 1 && x <= 1)
                    CHECK(out.at(c, y, x) == 1.0);
                else
                    CHECK(out.at(c, y, x) == 0.5);
            }
}

TEST_CASE("locality and involution properties over random triples") {
    Rng rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        const int H = rng.uniform_int(4, 24);
        const int W = rng.uniform_int(4, 24);
        const int ph = rng.uniform_int(1, H);
        const int pw = rng.uniform_int(1, W);
        Tensor img = random_image(H, W, rng);
        Tensor pp = random_image(ph, pw, rng);
        Patch patch = make_patch(pp, "t", Provenance::Gaussian, {H, W}, 1.0);
        Placement pl = sample_placement(rng, {H, W}, {ph, pw}, PlacementPolicy::UniformRandom);

        Tensor out = apply_patch(img, patch, pl);
        Tensor mask = pl.mask();
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    if (mask.at(0, y, x) == 0.0)
                        CHECK(out.at(c, y, x) == img.at(c, y, x));
                    else
                        CHECK(out.at(c, y, x) == patch.pixels.at(c, y - pl.top, x - pl.left));
                }

        // Re-applying the original pixels under the same mask restores the image.
        Tensor orig_block(3, ph, pw);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < ph; ++y)
                for (int x = 0; x < pw; ++x)
                    orig_block.at(c, y, x) = img.at(c, pl.top + y, pl.left + x);
        Patch restore = make_patch(orig_block, "r", Provenance::HardExample, {H, W}, 1.0);
        Tensor restored = apply_patch(out, restore, pl);
        for (std::size_t i = 0; i < img.v.size(); ++i) CHECK(restored.v[i] == img.v[i]);
    }
}

TEST_CASE("area budget is enforced at construction, never clamped") {
    // 0.38% of 64x64 rounds up to 16 pixels: 4x4 passes, 5x4 raises.
    CHECK_NOTHROW(make_patch(Tensor(3, 4, 4, 0.5), "ok", Provenance::White, {64, 64}));
    CHECK_THROWS_AS(make_patch(Tensor(3, 5, 4, 0.5), "big", Provenance::White, {64, 64}),
                    ValidationError);
    // 0.38% of 32x32 rounds up to 4 pixels: 2x2 passes, 3x3 raises.
    CHECK_NOTHROW(make_patch(Tensor(3, 2, 2, 0.5), "ok", Provenance::White, {32, 32}));
    CHECK_THROWS_AS(make_patch(Tensor(3, 3, 3, 0.5), "big", Provenance::White, {32, 32}),
                    ValidationError);
    // Out-of-range pixels are rejected too.
    CHECK_THROWS_AS(make_patch(Tensor(3, 2, 2, 1.5), "hot", Provenance::White, {32, 32}, 1.0),
                    ValidationError);
}

TEST_CASE("fixed_center placement of a 32 patch in a 512 image sits at (240, 240)") {
    Rng rng(0);
    Placement pl = sample_placement(rng, {512, 512}, {32, 32}, PlacementPolicy::FixedCenter);
    CHECK(pl.top == 240);
    CHECK(pl.left == 240);
}

TEST_CASE("placement sampling is seed deterministic and covers the valid range") {
    Rng a(7), b(7);
    for (int i = 0; i < 50; ++i) {
        Placement pa = sample_placement(a, {64, 64}, {8, 8}, PlacementPolicy::UniformRandom);
        Placement pb = sample_placement(b, {64, 64}, {8, 8}, PlacementPolicy::UniformRandom);
        CHECK(pa.top == pb.top);
        CHECK(pa.left == pb.left);
    }
    Rng rng(99);
    int min_top = 999, max_top = -1, min_left = 999, max_left = -1;
    for (int i = 0; i < 10000; ++i) {
        Placement pl = sample_placement(rng, {64, 64}, {8, 8}, PlacementPolicy::UniformRandom);
        min_top = std::min(min_top, pl.top);
        max_top = std::max(max_top, pl.top);
        min_left = std::min(min_left, pl.left);
        max_left = std::max(max_left, pl.left);
    }
    CHECK(min_top == 0);
    CHECK(max_top == 56);
    CHECK(min_left == 0);
    CHECK(max_left == 56);
}

TEST_CASE("placement and application errors") {
    CHECK_THROWS_AS(make_placement(62, 0, {4, 4}, {64, 64}), PlacementError);
    Rng rng(1);
    CHECK_THROWS_AS(sample_placement(rng, {8, 8}, {9, 9}, PlacementPolicy::FixedCenter),
                    ValidationError);

    Tensor img(3, 8, 8, 0.5);
    Patch p = make_white_patch(2, 2, {8, 8}, 1.0);
    Placement wrong = make_placement(0, 0, {3, 3}, {8, 8});
    CHECK_THROWS_AS(apply_patch(img, p, wrong), ShapeError);
    Placement other_image = make_placement(0, 0, {2, 2}, {16, 16});
    CHECK_THROWS_AS(apply_patch(img, p, other_image), ShapeError);
}

TEST_CASE("patch persistence round trip keeps metadata and quantized pixels") {
    auto dir = std::filesystem::temp_directory_path() / "uapatch_patch_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "patch.png").string();

    Rng rng(5);
    Tensor px = random_image(4, 4, rng);
    Patch p = make_patch(px, "prior-1", Provenance::FusedPrior, {64, 64});
    PatchMeta meta;
    meta.config_fingerprint = "deadbeef00000000";
    meta.extra_json = "{\"crop_top\": 3}";
    save_patch(p, path, meta);

    Patch back = load_patch(path, {64, 64});
    CHECK(back.id == "prior-1");
    CHECK(back.provenance == Provenance::FusedPrior);
    CHECK(back.area_budget == p.area_budget);
    REQUIRE(back.pixels.same_shape(p.pixels));
    for (std::size_t i = 0; i < px.v.size(); ++i)
        CHECK(std::fabs(back.pixels.v[i] - px.v[i]) < 1.0 / 65535.0);
}
