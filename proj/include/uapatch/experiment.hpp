#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uapatch/boundary_probe.hpp"
#include "uapatch/dataset.hpp"
#include "uapatch/evaluator.hpp"
#include "uapatch/hard_mining.hpp"
#include "uapatch/model_zoo.hpp"
#include "uapatch/patch_core.hpp"
#include "uapatch/patch_trainer.hpp"
#include "uapatch/prior_fusion.hpp"
#include "uapatch/prototype_gen.hpp"
#include "uapatch/transforms.hpp"

namespace uapatch {

// Single-file experiment configuration. Unknown keys are rejected during
// parsing (no silent typo absorption); every artifact written by a run embeds
// the fingerprint of the canonicalized config.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "artifacts/default";

    struct Model {
        std::string arch = "cnn_a";
        std::string transfer_arch = "cnn_b";
        int input_hw = 64;
        int num_classes = 10;
        int epochs = 12;
        int batch_size = 32;
        double lr = 0.01;
        double weight_decay = 1e-4;
    } model;

    DatasetSpec dataset;

    struct HardMining {
        int count = 50;
        std::string criterion = "union";
        double confidence_threshold = 0.5;
    } hard_mining;

    struct PriorFusion {
        double lambda = 1.0;
        int epochs = 50;
        int batch_size = 16;
        double lr = 0.01;
        double weight_decay = 0.0;
        std::string mode = "neg_entropy";
        std::vector<std::string> gram_layers;   // empty = model default
        std::string attention_layer;            // empty = model default
    } prior_fusion;

    struct Prototypes {
        int per_class = 15;
        double margin = 10.0;
        int p = 1;
        int steps = 500;
        double lr = 0.01;
        int retry_budget = 5;
    } prototypes;

    struct PatchCfg {
        int height = 0;  // 0 = derive from input size (input_hw / 16)
        int width = 0;
        double area_budget = kDefaultAreaBudget;
        std::string placement_train = "uniform_random";
        std::string placement_eval = "fixed_center";
    } patch;

    struct TransformsCfg {
        double rotation_lo = -30.0, rotation_hi = 30.0;
        double distortion_lo = 0.0, distortion_hi = 0.1;
        double affine_lo = 0.0, affine_hi = 4.0;
        std::vector<std::string> enabled = {"rotation", "distortion", "affine"};
        int samples_per_step = 4;
    } transforms;

    struct PatchTrainer {
        int epochs = 50;
        int batch_size = 32;
        double lr = 0.01;
        double weight_decay = 1e-4;
        bool use_transforms = true;
    } patch_trainer;

    struct Evaluator {
        std::vector<double> mixture_ratios = {1.0, 0.75, 0.5, 0.25, 0.0};
        int mixture_total = 100;
        std::vector<std::string> ablation_kinds = {"rotation", "distortion", "affine"};
    } evaluator;

    struct BoundaryProbe {
        double step_size = 0.01;
        int max_steps = 500;
    } boundary_probe;

    int patch_height() const;
    int patch_width() const;
    TransformConfig transform_config() const;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    // Dotted-path overrides, e.g. "patch_trainer.epochs=10".
    void apply_override(const std::string& key_eq_value);

    std::string canonical_json() const;
    std::string fingerprint() const;  // 16-hex-digit hash of canonical_json()
};

// Orchestrates the pipeline against a plain-directory artifact store. Stages
// are resumable: a stage is skipped when its artifacts exist and carry the
// current config fingerprint.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg, std::ostream* log = nullptr);

    const ExperimentConfig& config() const { return cfg_; }
    const std::string& dir() const { return dir_; }
    std::string fingerprint() const { return cfg_.fingerprint(); }

    // Stage entry points. Each returns the primary artifact path.
    std::string ensure_model(bool force = false);
    std::string ensure_transfer_model(bool force = false);
    std::string ensure_hard_set(bool force = false);
    std::string ensure_fused_prior(bool force = false);  // fused example + prior patch
    std::string ensure_prototypes(bool force = false);
    std::string ensure_patch(bool force = false);
    std::string ensure_report(bool force = false);

    void run_pipeline(bool force = false);
    std::string write_manifest();

    // Protocol runners beyond the core pipeline.
    std::string run_transfer();
    std::string run_unseen();
    std::string run_mixture();
    std::string run_transform_ablation();
    std::string run_boundary_probe();

    void print_report(std::ostream& out);

    // Shared artifact accessors (load on demand).
    const Classifier& model();
    const Classifier& transfer_model();
    const std::vector<LabeledImage>& train_split();
    const std::vector<LabeledImage>& test_split();
    HardExampleSet hard_set();
    FusedExample fused_example();
    Patch prior_patch();
    PrototypeSet prototype_set();
    TrainRun load_trained_patch();

    std::string path(const std::string& name) const { return dir_ + "/" + name; }

private:
    bool artifact_fresh(const std::string& sidecar_path) const;
    void log(const std::string& line) const;
    std::vector<LabeledImage> prototype_items(const PrototypeSet& set,
                                              const std::optional<std::set<int>>& classes) const;
    TrainPatchOptions trainer_options(std::uint64_t salt) const;
    EvalOptions eval_options(std::uint64_t salt) const;

    ExperimentConfig cfg_;
    std::string dir_;
    std::ostream* log_ = nullptr;

    std::optional<Classifier> model_;
    std::optional<Classifier> transfer_model_;
    std::optional<std::vector<LabeledImage>> train_split_;
    std::optional<std::vector<LabeledImage>> test_split_;
};

}  // namespace uapatch
