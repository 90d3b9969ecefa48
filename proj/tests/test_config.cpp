#include <doctest.h>

#include "uapatch/errors.hpp"
#include "uapatch/experiment.hpp"

using namespace uapatch;

TEST_CASE("default config is valid and has a stable fingerprint") {
    ExperimentConfig a = ExperimentConfig::from_json_text("{}");
    ExperimentConfig b = ExperimentConfig::from_json_text("{}");
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint().size() == 16);
    CHECK(a.patch_height() == 4);  // 64 / 16
    CHECK(a.model.input_hw == 64);
}

TEST_CASE("key order does not change the fingerprint, values do") {
    ExperimentConfig a =
        ExperimentConfig::from_json_text(R"({"seed": 9, "output_dir": "x"})");
    ExperimentConfig b =
        ExperimentConfig::from_json_text(R"({"output_dir": "x", "seed": 9})");
    CHECK(a.fingerprint() == b.fingerprint());

    ExperimentConfig c =
        ExperimentConfig::from_json_text(R"({"seed": 10, "output_dir": "x"})");
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("unknown keys are rejected at every nesting level") {
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"sed": 1})"), ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"model": {"depth": 3}})"),
                    ValidationError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"patch_trainer": {"epoch": 10}})"),
        ValidationError);
}

TEST_CASE("invalid enum values and ranges are rejected") {
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"hard_mining": {"criterion": "hardest"}})"),
        ValidationError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"transforms": {"rotation": [-40, 30]}})"),
        ValidationError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"patch": {"placement_eval": "everywhere"}})"),
        ValidationError);
}

TEST_CASE("overrides rewrite nested keys and re-validate") {
    ExperimentConfig cfg = ExperimentConfig::from_json_text("{}");
    cfg.apply_override("patch_trainer.epochs=7");
    CHECK(cfg.patch_trainer.epochs == 7);
    cfg.apply_override("model.arch=cnn_b");
    CHECK(cfg.model.arch == "cnn_b");
    CHECK_THROWS_AS(cfg.apply_override("no_equals_sign"), ValidationError);
    CHECK_THROWS_AS(cfg.apply_override("patch_trainer.epoch=7"), ValidationError);
}

TEST_CASE("dataset size follows the model input override") {
    ExperimentConfig cfg = ExperimentConfig::from_json_text(R"({"model": {"input_hw": 32}})");
    CHECK(cfg.dataset.image_hw == 32);
    CHECK(cfg.patch_height() == 2);
}
