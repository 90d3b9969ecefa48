#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uapatch/model_zoo.hpp"
#include "uapatch/patch_core.hpp"
#include "uapatch/patch_trainer.hpp"
#include "uapatch/transforms.hpp"

namespace uapatch {

// Paired attack metrics: the adversarial patch and a white patch of
// identical geometry evaluated over identical samples, placements and
// transform draws. Top-k accuracies are macro-averaged over classes.
struct AttackMetrics {
    double top1 = 0.0;
    double top3 = 0.0;
    double top5 = 0.0;
    std::map<int, double> per_class_top1;
};

struct AttackReport {
    std::string patch_id;
    std::string model_id;
    std::string split_id;
    int n_samples = 0;
    AttackMetrics adversarial;
    AttackMetrics control;
    std::string draw_log_hash;  // identical for both sides by construction
    std::string config_fingerprint;
};

struct EvalOptions {
    PlacementPolicy placement_policy = PlacementPolicy::FixedCenter;
    std::optional<TransformConfig> transforms;   // nullopt = plain evaluation
    std::optional<Placement> placement_override; // fixed placement for every sample
    std::uint64_t seed = 1;
};

AttackReport evaluate_attack(const Classifier& handle, const Patch& patch,
                             const std::vector<LabeledImage>& split, const std::string& split_id,
                             const EvalOptions& opts);

// Cross product of patches and models. Cells where the patch's source model
// equals the evaluated model are the white-box cells.
struct TransferCell {
    std::string patch_source_model;
    bool white_box = false;
    AttackReport report;
};

std::vector<std::vector<TransferCell>> transfer_matrix(
    const std::vector<std::pair<Patch, std::string>>& patches,
    const std::vector<const Classifier*>& models, const std::vector<LabeledImage>& split,
    const std::string& split_id, const EvalOptions& opts);

enum class SplitPlanMode { All, UnseenHalf };

struct SplitPlan {
    std::set<int> train_classes;
    std::set<int> eval_classes;
    SplitPlanMode mode = SplitPlanMode::All;

    void validate(int num_classes) const;
};

SplitPlan make_unseen_half_plan(int num_classes, std::uint64_t seed);

// Evaluates a patch trained only on `plan.train_classes` over eval-class
// samples. Training on any eval class is a protocol error.
AttackReport unseen_class_eval(const Classifier& handle, const SplitPlan& plan,
                               const TrainRun& training_artifacts,
                               const std::vector<LabeledImage>& split,
                               const std::string& split_id, const EvalOptions& opts);

struct MixtureRow {
    double ratio = 0.0;  // fraction of prototypes in the training mix
    int n_prototypes = 0;
    int n_images = 0;
    AttackReport report;
};

// Trains one patch per ratio under identical budgets (same prior, options and
// total item count) and reports paired top-1 per ratio.
std::vector<MixtureRow> mixture_ablation(const Classifier& handle,
                                         const std::vector<LabeledImage>& prototype_pool,
                                         const std::vector<LabeledImage>& image_pool,
                                         const std::vector<double>& ratios, int total_n,
                                         const Patch& prior, const TrainPatchOptions& train_opts,
                                         const std::vector<LabeledImage>& eval_split,
                                         const std::string& split_id, const EvalOptions& eval_opts,
                                         std::uint64_t seed);

struct TransformAblationRow {
    TransformKind kind;
    AttackReport with_eot;
    AttackReport without_eot;
};

// For each kind: trains one patch with EOT of that kind and one without any
// transforms, then evaluates both under random test-time transforms of the
// same kind (shared draws).
std::vector<TransformAblationRow> transform_ablation(
    const Classifier& handle, const std::vector<LabeledImage>& train_items,
    const std::vector<TransformKind>& kinds, const Patch& prior,
    const TrainPatchOptions& train_opts, const std::vector<LabeledImage>& eval_split,
    const std::string& split_id, std::uint64_t seed);

std::string attack_report_json(const AttackReport& report);
AttackReport attack_report_from_json(const std::string& text);
std::string attack_report_csv(const std::vector<AttackReport>& reports);

}  // namespace uapatch
