#include "fixture.hpp"

#include <filesystem>
#include <iostream>

#include "uapatch/rng.hpp"
#include "uapatch/util.hpp"

namespace uapatch::testfx {

namespace fs = std::filesystem;

ExperimentConfig fixture_config() {
    ExperimentConfig cfg = ExperimentConfig::from_json_text(R"({
        "seed": 42,
        "output_dir": "uapatch_test_cache/pipeline",
        "model": {"arch": "cnn_a", "input_hw": 32, "num_classes": 10,
                  "epochs": 12, "batch_size": 32, "lr": 0.01, "weight_decay": 1e-4},
        "dataset": {"name": "textures10", "train_per_class": 150, "test_per_class": 50,
                    "seed": 7, "noise_lo": 0.02, "noise_hi": 0.30},
        "hard_mining": {"count": 50, "criterion": "union", "confidence_threshold": 0.5},
        "prior_fusion": {"lambda": 1.0, "epochs": 50, "batch_size": 16, "lr": 0.01,
                         "mode": "neg_entropy"},
        "prototypes": {"per_class": 15, "margin": 10.0, "p": 1, "steps": 400, "lr": 0.05},
        "patch": {"height": 3, "width": 3, "area_budget": 0.01,
                  "placement_train": "uniform_random", "placement_eval": "fixed_center"},
        "patch_trainer": {"epochs": 30, "batch_size": 32, "lr": 0.01, "weight_decay": 1e-4},
        "transforms": {"samples_per_step": 4},
        "evaluator": {"mixture_total": 100},
        "boundary_probe": {"step_size": 0.01, "max_steps": 500}
    })");
    return cfg;
}

namespace {

Classifier train_or_load(const std::string& tag, const std::string& arch,
                         const ExperimentConfig& cfg,
                         const std::vector<LabeledImage>& train_split,
                         const std::string& init_salt, std::uint64_t train_salt) {
    const std::string cache_dir = "uapatch_test_cache";
    fs::create_directories(cache_dir);
    const std::string ckpt =
        cache_dir + "/" + tag + "_" + cfg.fingerprint() + ".bin";
    if (fs::exists(ckpt)) {
        Classifier loaded = Classifier::load_checkpoint(ckpt);
        if (loaded.training_config_hash() == cfg.fingerprint()) return loaded;
    }
    std::cerr << "[fixture] training " << tag << " (" << arch << ") ..." << std::endl;
    Classifier model = Classifier::make_toy(arch, cfg.model.num_classes, cfg.model.input_hw,
                                            cfg.seed ^ fnv1a64(init_salt));
    TrainOptions opts;
    opts.epochs = cfg.model.epochs;
    opts.batch_size = cfg.model.batch_size;
    opts.lr = cfg.model.lr;
    opts.weight_decay = cfg.model.weight_decay;
    Rng rng(cfg.seed ^ train_salt);
    model.train(train_split, opts, rng);
    model.set_training_config_hash(cfg.fingerprint());
    model.save_checkpoint(ckpt);
    return model;
}

}  // namespace

const ToyFixture& toy_fixture() {
    static const ToyFixture fixture = [] {
        ToyFixture fx;
        fx.cfg = fixture_config();
        fx.cache_dir = "uapatch_test_cache";
        fx.train_split = make_texture_split(fx.cfg.dataset, "train");
        fx.test_split = make_texture_split(fx.cfg.dataset, "test");
        fx.model = train_or_load("model_a", fx.cfg.model.arch, fx.cfg, fx.train_split, "model",
                                 fnv1a64("model_train"));
        fx.clean_top1 = fx.model.top1_accuracy(fx.test_split);
        std::cerr << "[fixture] clean top-1: " << fx.clean_top1 << std::endl;
        return fx;
    }();
    return fixture;
}

const Classifier& transfer_fixture_model() {
    static const Classifier model = [] {
        const ToyFixture& fx = toy_fixture();
        return train_or_load("model_b", fx.cfg.model.transfer_arch, fx.cfg, fx.train_split,
                             "transfer_model", fnv1a64("transfer_model_train"));
    }();
    return model;
}

}  // namespace uapatch::testfx
