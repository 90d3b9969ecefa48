#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uapatch/model_zoo.hpp"

namespace uapatch {

// Procedural 10-class texture dataset. Every image is generated
// deterministically from (seed, split, index), so splits never need to be
// stored and any item can be regenerated on demand. Class identity is carried
// by pattern geometry; colors, frequencies, phases, contrast and noise level
// vary per image, which leaves the trained model with a genuine spread of
// confidences (including misclassified and low-confidence items).
struct DatasetSpec {
    std::string name = "textures10";
    int train_per_class = 150;
    int test_per_class = 50;
    int image_hw = 32;
    std::uint64_t seed = 7;
    double noise_lo = 0.02;
    double noise_hi = 0.30;
};

inline constexpr int kTextureClassCount = 10;

const std::vector<std::string>& texture_class_names();

LabeledImage make_texture_image(const DatasetSpec& spec, const std::string& split, int index);

// Items are class-interleaved: item i has label i % 10, so any prefix of the
// split is (nearly) class balanced.
std::vector<LabeledImage> make_texture_split(const DatasetSpec& spec, const std::string& split);

}  // namespace uapatch
