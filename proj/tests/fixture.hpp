#pragma once

#include <string>
#include <vector>

#include "uapatch/dataset.hpp"
#include "uapatch/experiment.hpp"
#include "uapatch/model_zoo.hpp"

namespace uapatch::testfx {

// Pinned desk-scale fixture shared by the heavyweight test binaries: a
// 10-class texture dataset and a small CNN trained on it. The trained
// checkpoint is cached on disk (keyed by the config fingerprint) so repeated
// test runs skip the training cost.
struct ToyFixture {
    ExperimentConfig cfg;
    std::string cache_dir;
    Classifier model;
    std::vector<LabeledImage> train_split;
    std::vector<LabeledImage> test_split;
    double clean_top1 = 0.0;
};

const ToyFixture& toy_fixture();

// Secondary architecture trained on the same data (for transfer tests).
const Classifier& transfer_fixture_model();

ExperimentConfig fixture_config();

}  // namespace uapatch::testfx
