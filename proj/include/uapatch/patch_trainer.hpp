#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uapatch/model_zoo.hpp"
#include "uapatch/patch_core.hpp"
#include "uapatch/transforms.hpp"

namespace uapatch {

// Untargeted attack objective for one patched-and-transformed image:
// P(true class) - max over other classes of P(c). Negative once the model
// prefers some other class. Always in [-1, 1].
double attack_margin(const std::vector<double>& probs, int target);

// Mean over the batch (and over samples_per_step transform draws per item)
// of the attack margin on apply_transform(apply_patch(I, patch, placement)).
// `transform_cfg` absent means plain (identity) evaluation.
double adversarial_loss(const Classifier& handle, const std::vector<LabeledImage>& batch,
                        const Patch& patch, const std::vector<Placement>& placements,
                        const std::optional<TransformConfig>& transform_cfg, Rng& rng);

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_top1 = 0.0;  // fraction of training items still classified correctly
};

struct TrainPatchOptions {
    int epochs = 50;
    int batch_size = 32;
    double lr = 0.01;
    double weight_decay = 1e-4;
    std::optional<TransformConfig> transform_cfg;  // nullopt = train without EOT
    PlacementPolicy placement_policy = PlacementPolicy::UniformRandom;
    std::uint64_t seed = 1;
};

struct TrainRun {
    std::string config_hash;
    Patch patch;
    std::vector<EpochMetrics> epoch_metrics;
    std::uint64_t seed = 0;
    std::vector<int> trained_classes;  // classes the training items came from
};

// Stage 2: starting from the prior, minimize the adversarial loss over
// minibatches of training items (prototypes and/or images) with Adam,
// projecting the patch into [0, 1] each step. epochs == 0 returns the prior
// bitwise.
TrainRun train_patch(const Classifier& handle, const std::vector<LabeledImage>& items,
                     const Patch& prior, const TrainPatchOptions& opts);

void save_train_run(const TrainRun& run, const std::string& png_path,
                    const std::string& metrics_jsonl_path, const std::string& config_fingerprint);

}  // namespace uapatch
