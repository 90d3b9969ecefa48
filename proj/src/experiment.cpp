#include "uapatch/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "uapatch/errors.hpp"
#include "uapatch/plot.hpp"
#include "uapatch/png_io.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ValidationError("config: expected object at '" + prefix + "'");
    for (const auto& [key, val] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw ValidationError("config: unknown key '" +
                                  (prefix.empty() ? key : prefix + "." + key) + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const json& j, const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& r = j.at(key);
    if (!r.is_array() || r.size() != 2)
        throw ValidationError(std::string("config: '") + key + "' must be a [lo, hi] pair");
    lo = r.at(0).get<double>();
    hi = r.at(1).get<double>();
}

}  // namespace

int ExperimentConfig::patch_height() const {
    if (patch.height > 0) return patch.height;
    return std::max(2, model.input_hw / 16);
}

int ExperimentConfig::patch_width() const {
    if (patch.width > 0) return patch.width;
    return std::max(2, model.input_hw / 16);
}

TransformConfig ExperimentConfig::transform_config() const {
    TransformConfig cfg;
    cfg.rotation_lo = transforms.rotation_lo;
    cfg.rotation_hi = transforms.rotation_hi;
    cfg.distortion_lo = transforms.distortion_lo;
    cfg.distortion_hi = transforms.distortion_hi;
    cfg.affine_lo = transforms.affine_lo;
    cfg.affine_hi = transforms.affine_hi;
    cfg.samples_per_step = transforms.samples_per_step;
    cfg.enabled.clear();
    for (const auto& name : transforms.enabled) cfg.enabled.insert(transform_kind_from_name(name));
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: parse error: ") + e.what());
    }

    check_keys(j, "", {"seed", "output_dir", "model", "dataset", "hard_mining", "prior_fusion",
                       "prototypes", "patch", "transforms", "patch_trainer", "evaluator",
                       "boundary_probe"});

    ExperimentConfig c;
    read_field(j, "seed", c.seed);
    read_field(j, "output_dir", c.output_dir);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model", {"arch", "transfer_arch", "input_hw", "num_classes", "epochs",
                                "batch_size", "lr", "weight_decay"});
        read_field(m, "arch", c.model.arch);
        read_field(m, "transfer_arch", c.model.transfer_arch);
        read_field(m, "input_hw", c.model.input_hw);
        read_field(m, "num_classes", c.model.num_classes);
        read_field(m, "epochs", c.model.epochs);
        read_field(m, "batch_size", c.model.batch_size);
        read_field(m, "lr", c.model.lr);
        read_field(m, "weight_decay", c.model.weight_decay);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, "dataset",
                   {"name", "train_per_class", "test_per_class", "seed", "noise_lo", "noise_hi"});
        read_field(d, "name", c.dataset.name);
        read_field(d, "train_per_class", c.dataset.train_per_class);
        read_field(d, "test_per_class", c.dataset.test_per_class);
        read_field(d, "seed", c.dataset.seed);
        read_field(d, "noise_lo", c.dataset.noise_lo);
        read_field(d, "noise_hi", c.dataset.noise_hi);
    }
    c.dataset.image_hw = c.model.input_hw;

    if (j.contains("hard_mining")) {
        const auto& h = j.at("hard_mining");
        check_keys(h, "hard_mining", {"count", "criterion", "confidence_threshold"});
        read_field(h, "count", c.hard_mining.count);
        read_field(h, "criterion", c.hard_mining.criterion);
        read_field(h, "confidence_threshold", c.hard_mining.confidence_threshold);
        mining_criterion_from_name(c.hard_mining.criterion);
    }
    if (j.contains("prior_fusion")) {
        const auto& p = j.at("prior_fusion");
        check_keys(p, "prior_fusion", {"lambda", "epochs", "batch_size", "lr", "weight_decay",
                                       "mode", "gram_layers", "attention_layer"});
        read_field(p, "lambda", c.prior_fusion.lambda);
        read_field(p, "epochs", c.prior_fusion.epochs);
        read_field(p, "batch_size", c.prior_fusion.batch_size);
        read_field(p, "lr", c.prior_fusion.lr);
        read_field(p, "weight_decay", c.prior_fusion.weight_decay);
        read_field(p, "mode", c.prior_fusion.mode);
        read_field(p, "gram_layers", c.prior_fusion.gram_layers);
        read_field(p, "attention_layer", c.prior_fusion.attention_layer);
        uncertainty_mode_from_name(c.prior_fusion.mode);
    }
    if (j.contains("prototypes")) {
        const auto& p = j.at("prototypes");
        check_keys(p, "prototypes", {"per_class", "margin", "p", "steps", "lr", "retry_budget"});
        read_field(p, "per_class", c.prototypes.per_class);
        read_field(p, "margin", c.prototypes.margin);
        read_field(p, "p", c.prototypes.p);
        read_field(p, "steps", c.prototypes.steps);
        read_field(p, "lr", c.prototypes.lr);
        read_field(p, "retry_budget", c.prototypes.retry_budget);
    }
    if (j.contains("patch")) {
        const auto& p = j.at("patch");
        check_keys(p, "patch",
                   {"height", "width", "area_budget", "placement_train", "placement_eval"});
        read_field(p, "height", c.patch.height);
        read_field(p, "width", c.patch.width);
        read_field(p, "area_budget", c.patch.area_budget);
        read_field(p, "placement_train", c.patch.placement_train);
        read_field(p, "placement_eval", c.patch.placement_eval);
        placement_policy_from_name(c.patch.placement_train);
        placement_policy_from_name(c.patch.placement_eval);
    }
    if (j.contains("transforms")) {
        const auto& t = j.at("transforms");
        check_keys(t, "transforms",
                   {"rotation", "distortion", "affine", "enabled", "samples_per_step"});
        read_range(t, "rotation", c.transforms.rotation_lo, c.transforms.rotation_hi);
        read_range(t, "distortion", c.transforms.distortion_lo, c.transforms.distortion_hi);
        read_range(t, "affine", c.transforms.affine_lo, c.transforms.affine_hi);
        read_field(t, "enabled", c.transforms.enabled);
        read_field(t, "samples_per_step", c.transforms.samples_per_step);
    }
    if (j.contains("patch_trainer")) {
        const auto& t = j.at("patch_trainer");
        check_keys(t, "patch_trainer",
                   {"epochs", "batch_size", "lr", "weight_decay", "use_transforms"});
        read_field(t, "epochs", c.patch_trainer.epochs);
        read_field(t, "batch_size", c.patch_trainer.batch_size);
        read_field(t, "lr", c.patch_trainer.lr);
        read_field(t, "weight_decay", c.patch_trainer.weight_decay);
        read_field(t, "use_transforms", c.patch_trainer.use_transforms);
    }
    if (j.contains("evaluator")) {
        const auto& e = j.at("evaluator");
        check_keys(e, "evaluator", {"mixture_ratios", "mixture_total", "ablation_kinds"});
        read_field(e, "mixture_ratios", c.evaluator.mixture_ratios);
        read_field(e, "mixture_total", c.evaluator.mixture_total);
        read_field(e, "ablation_kinds", c.evaluator.ablation_kinds);
        for (const auto& k : c.evaluator.ablation_kinds) transform_kind_from_name(k);
    }
    if (j.contains("boundary_probe")) {
        const auto& b = j.at("boundary_probe");
        check_keys(b, "boundary_probe", {"step_size", "max_steps"});
        read_field(b, "step_size", c.boundary_probe.step_size);
        read_field(b, "max_steps", c.boundary_probe.max_steps);
    }

    c.transform_config();  // validates ranges and kind names
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path));
}

void ExperimentConfig::apply_override(const std::string& key_eq_value) {
    const auto eq = key_eq_value.find('=');
    if (eq == std::string::npos)
        throw ValidationError("override must look like key.path=value, got '" + key_eq_value +
                              "'");
    std::string keypath = key_eq_value.substr(0, eq);
    const std::string value = key_eq_value.substr(eq + 1);

    std::string pointer = "/" + keypath;
    std::replace(pointer.begin(), pointer.end(), '.', '/');

    json doc = json::parse(canonical_json());
    json parsed_value;
    try {
        parsed_value = json::parse(value);
    } catch (const json::exception&) {
        parsed_value = value;  // plain string
    }
    try {
        doc[json::json_pointer(pointer)] = parsed_value;
    } catch (const json::exception& e) {
        throw ValidationError("override path '" + keypath + "' invalid: " + e.what());
    }
    *this = from_json_text(doc.dump());
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["model"] = {{"arch", model.arch},
                  {"transfer_arch", model.transfer_arch},
                  {"input_hw", model.input_hw},
                  {"num_classes", model.num_classes},
                  {"epochs", model.epochs},
                  {"batch_size", model.batch_size},
                  {"lr", model.lr},
                  {"weight_decay", model.weight_decay}};
    j["dataset"] = {{"name", dataset.name},
                    {"train_per_class", dataset.train_per_class},
                    {"test_per_class", dataset.test_per_class},
                    {"seed", dataset.seed},
                    {"noise_lo", dataset.noise_lo},
                    {"noise_hi", dataset.noise_hi}};
    j["hard_mining"] = {{"count", hard_mining.count},
                        {"criterion", hard_mining.criterion},
                        {"confidence_threshold", hard_mining.confidence_threshold}};
    j["prior_fusion"] = {{"lambda", prior_fusion.lambda},
                         {"epochs", prior_fusion.epochs},
                         {"batch_size", prior_fusion.batch_size},
                         {"lr", prior_fusion.lr},
                         {"weight_decay", prior_fusion.weight_decay},
                         {"mode", prior_fusion.mode},
                         {"gram_layers", prior_fusion.gram_layers},
                         {"attention_layer", prior_fusion.attention_layer}};
    j["prototypes"] = {{"per_class", prototypes.per_class}, {"margin", prototypes.margin},
                       {"p", prototypes.p},                 {"steps", prototypes.steps},
                       {"lr", prototypes.lr},               {"retry_budget", prototypes.retry_budget}};
    j["patch"] = {{"height", patch.height},
                  {"width", patch.width},
                  {"area_budget", patch.area_budget},
                  {"placement_train", patch.placement_train},
                  {"placement_eval", patch.placement_eval}};
    j["transforms"] = {{"rotation", {transforms.rotation_lo, transforms.rotation_hi}},
                       {"distortion", {transforms.distortion_lo, transforms.distortion_hi}},
                       {"affine", {transforms.affine_lo, transforms.affine_hi}},
                       {"enabled", transforms.enabled},
                       {"samples_per_step", transforms.samples_per_step}};
    j["patch_trainer"] = {{"epochs", patch_trainer.epochs},
                          {"batch_size", patch_trainer.batch_size},
                          {"lr", patch_trainer.lr},
                          {"weight_decay", patch_trainer.weight_decay},
                          {"use_transforms", patch_trainer.use_transforms}};
    j["evaluator"] = {{"mixture_ratios", evaluator.mixture_ratios},
                      {"mixture_total", evaluator.mixture_total},
                      {"ablation_kinds", evaluator.ablation_kinds}};
    j["boundary_probe"] = {{"step_size", boundary_probe.step_size},
                           {"max_steps", boundary_probe.max_steps}};
    return j.dump();
}

std::string ExperimentConfig::fingerprint() const { return to_hex(fnv1a64(canonical_json())); }

Experiment::Experiment(ExperimentConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) {
    fs::path base(cfg_.output_dir);
    if (base.is_relative()) {
        const char* root = std::getenv("UAPATCH_ARTIFACT_ROOT");
        if (root && *root) base = fs::path(root) / base;
    }
    dir_ = base.string();
    fs::create_directories(dir_);
    fs::create_directories(dir_ + "/reports");
}

void Experiment::log(const std::string& line) const {
    (log_ ? *log_ : std::cout) << line << std::endl;
}

bool Experiment::artifact_fresh(const std::string& sidecar_path) const {
    std::ifstream in(sidecar_path);
    if (!in) return false;
    json j;
    try {
        in >> j;
    } catch (const json::exception&) {
        return false;
    }
    std::string fp;
    if (j.contains("config_fingerprint"))
        fp = j.at("config_fingerprint").get<std::string>();
    else if (j.contains("training_config_hash"))
        fp = j.at("training_config_hash").get<std::string>();
    return fp == fingerprint();
}

const std::vector<LabeledImage>& Experiment::train_split() {
    if (!train_split_) train_split_ = make_texture_split(cfg_.dataset, "train");
    return *train_split_;
}

const std::vector<LabeledImage>& Experiment::test_split() {
    if (!test_split_) test_split_ = make_texture_split(cfg_.dataset, "test");
    return *test_split_;
}

std::string Experiment::ensure_model(bool force) {
    const std::string ckpt = path("checkpoint.bin");
    if (!force && artifact_fresh(ckpt + ".json")) {
        log("[skip] train-model (checkpoint up to date)");
        return ckpt;
    }
    log("[run ] train-model");
    Classifier model = Classifier::make_toy(cfg_.model.arch, cfg_.model.num_classes,
                                            cfg_.model.input_hw, cfg_.seed ^ fnv1a64("model"));
    TrainOptions opts;
    opts.epochs = cfg_.model.epochs;
    opts.batch_size = cfg_.model.batch_size;
    opts.lr = cfg_.model.lr;
    opts.weight_decay = cfg_.model.weight_decay;
    Rng rng(cfg_.seed ^ fnv1a64("model_train"));
    const double final_loss = model.train(train_split(), opts, rng);
    const double clean_top1 = model.top1_accuracy(test_split());
    log("clean top-1: " + std::to_string(clean_top1));
    model.set_training_config_hash(fingerprint());
    model.save_checkpoint(ckpt);

    json metrics = {{"clean_top1", clean_top1},
                    {"final_train_loss", final_loss},
                    {"model_id", model.model_id()},
                    {"config_fingerprint", fingerprint()}};
    write_text_file(path("model_metrics.json"), metrics.dump(2) + "\n");
    model_ = std::move(model);
    return ckpt;
}

std::string Experiment::ensure_transfer_model(bool force) {
    const std::string ckpt = path("checkpoint_b.bin");
    if (!force && artifact_fresh(ckpt + ".json")) {
        log("[skip] train transfer model (checkpoint up to date)");
        return ckpt;
    }
    log("[run ] train transfer model");
    Classifier model =
        Classifier::make_toy(cfg_.model.transfer_arch, cfg_.model.num_classes, cfg_.model.input_hw,
                             cfg_.seed ^ fnv1a64("transfer_model"));
    TrainOptions opts;
    opts.epochs = cfg_.model.epochs;
    opts.batch_size = cfg_.model.batch_size;
    opts.lr = cfg_.model.lr;
    opts.weight_decay = cfg_.model.weight_decay;
    Rng rng(cfg_.seed ^ fnv1a64("transfer_model_train"));
    model.train(train_split(), opts, rng);
    log("transfer model clean top-1: " + std::to_string(model.top1_accuracy(test_split())));
    model.set_training_config_hash(fingerprint());
    model.save_checkpoint(ckpt);
    transfer_model_ = std::move(model);
    return ckpt;
}

const Classifier& Experiment::model() {
    if (!model_) {
        ensure_model(false);
        model_ = Classifier::load_checkpoint(path("checkpoint.bin"));
    }
    return *model_;
}

const Classifier& Experiment::transfer_model() {
    if (!transfer_model_) {
        ensure_transfer_model(false);
        transfer_model_ = Classifier::load_checkpoint(path("checkpoint_b.bin"));
    }
    return *transfer_model_;
}

std::string Experiment::ensure_hard_set(bool force) {
    const std::string manifest = path("hard/manifest.json");
    if (!force && artifact_fresh(manifest)) {
        log("[skip] mine (hard set up to date)");
        return manifest;
    }
    ensure_model();
    log("[run ] mine");
    HardExampleSet set = mine_hard_examples(
        model(), test_split(), "test", cfg_.hard_mining.count,
        mining_criterion_from_name(cfg_.hard_mining.criterion),
        cfg_.hard_mining.confidence_threshold);
    if (set.shortage_warning) log("mine warning: " + *set.shortage_warning);
    log("mined " + std::to_string(set.items.size()) + " hard examples");
    save_hard_set(set, manifest, path("hard"), fingerprint());
    return manifest;
}

HardExampleSet Experiment::hard_set() { return load_hard_set(path("hard/manifest.json")); }

std::string Experiment::ensure_fused_prior(bool force) {
    const std::string prior_png = path("prior.png");
    if (!force && artifact_fresh(prior_png + ".json") && artifact_fresh(path("fused.png.json"))) {
        log("[skip] fuse (prior up to date)");
        return prior_png;
    }
    ensure_hard_set();
    log("[run ] fuse");

    FuseOptions opts;
    opts.lambda = cfg_.prior_fusion.lambda;
    opts.epochs = cfg_.prior_fusion.epochs;
    opts.batch_size = cfg_.prior_fusion.batch_size;
    opts.lr = cfg_.prior_fusion.lr;
    opts.weight_decay = cfg_.prior_fusion.weight_decay;
    opts.mode = uncertainty_mode_from_name(cfg_.prior_fusion.mode);
    opts.gram_layers = cfg_.prior_fusion.gram_layers;
    opts.seed = cfg_.seed ^ fnv1a64("fuse");

    HardExampleSet set = hard_set();
    FusedExample fused = fuse_prior(set, model(), opts);
    log("fusion loss: " + std::to_string(fused.loss_trace.front().fused) + " -> " +
        std::to_string(fused.loss_trace.back().fused));
    save_fused_example(fused, path("fused.png"), opts, fingerprint());

    const std::string att_layer = cfg_.prior_fusion.attention_layer.empty()
                                      ? default_attention_layer(model())
                                      : cfg_.prior_fusion.attention_layer;
    const int target = model().predict(fused.pixels).label;
    AttentionMap att = attention_weights(model(), fused.pixels, att_layer, target);
    CropResult crop = crop_prior(fused, att, {cfg_.patch_height(), cfg_.patch_width()},
                                 cfg_.patch.area_budget);
    log("prior crop at (" + std::to_string(crop.top) + ", " + std::to_string(crop.left) + ")");

    PatchMeta meta;
    meta.config_fingerprint = fingerprint();
    json extra = {{"crop_top", crop.top},
                  {"crop_left", crop.left},
                  {"attention_layer", att_layer},
                  {"attention_target", target}};
    meta.extra_json = extra.dump();
    save_patch(crop.patch, prior_png, meta);
    return prior_png;
}

FusedExample Experiment::fused_example() { return load_fused_example(path("fused.png")); }

Patch Experiment::prior_patch() {
    return load_patch(path("prior.png"), {cfg_.model.input_hw, cfg_.model.input_hw});
}

std::string Experiment::ensure_prototypes(bool force) {
    const std::string manifest = path("prototypes/manifest.json");
    if (!force && artifact_fresh(manifest)) {
        log("[skip] prototypes (set up to date)");
        return manifest;
    }
    ensure_model();
    log("[run ] prototypes");
    PrototypeOptions opts;
    opts.margin = cfg_.prototypes.margin;
    opts.p = cfg_.prototypes.p;
    opts.steps = cfg_.prototypes.steps;
    opts.lr = cfg_.prototypes.lr;
    opts.retry_budget = cfg_.prototypes.retry_budget;
    PrototypeSet set = generate_prototype_set(model(), cfg_.prototypes.per_class, opts,
                                              cfg_.seed ^ fnv1a64("prototypes"));
    for (const auto& s : set.shortage) log("prototype shortage: " + s);
    log("generated " + std::to_string(set.items.size()) + " prototypes");
    save_prototype_set(set, path("prototypes"), fingerprint());
    return manifest;
}

PrototypeSet Experiment::prototype_set() { return load_prototype_set(path("prototypes")); }

std::vector<LabeledImage> Experiment::prototype_items(
    const PrototypeSet& set, const std::optional<std::set<int>>& classes) const {
    std::vector<LabeledImage> items;
    for (const auto& p : set.items)
        if (!classes || classes->count(p.target_class))
            items.push_back({p.pixels, p.target_class});
    return items;
}

TrainPatchOptions Experiment::trainer_options(std::uint64_t salt) const {
    TrainPatchOptions opts;
    opts.epochs = cfg_.patch_trainer.epochs;
    opts.batch_size = cfg_.patch_trainer.batch_size;
    opts.lr = cfg_.patch_trainer.lr;
    opts.weight_decay = cfg_.patch_trainer.weight_decay;
    if (cfg_.patch_trainer.use_transforms) opts.transform_cfg = cfg_.transform_config();
    opts.placement_policy = placement_policy_from_name(cfg_.patch.placement_train);
    opts.seed = cfg_.seed ^ salt;
    return opts;
}

EvalOptions Experiment::eval_options(std::uint64_t salt) const {
    EvalOptions opts;
    opts.placement_policy = placement_policy_from_name(cfg_.patch.placement_eval);
    opts.seed = cfg_.seed ^ salt;
    return opts;
}

std::string Experiment::ensure_patch(bool force) {
    const std::string patch_png = path("patch.png");
    if (!force && artifact_fresh(patch_png + ".json")) {
        log("[skip] train-patch (patch up to date)");
        return patch_png;
    }
    ensure_fused_prior();
    ensure_prototypes();
    log("[run ] train-patch");

    const std::vector<LabeledImage> items = prototype_items(prototype_set(), std::nullopt);
    TrainRun run = train_patch(model(), items, prior_patch(), trainer_options(fnv1a64("patch")));
    if (!run.epoch_metrics.empty())
        log("train loss " + std::to_string(run.epoch_metrics.front().mean_loss) + " -> " +
            std::to_string(run.epoch_metrics.back().mean_loss) + ", train top-1 " +
            std::to_string(run.epoch_metrics.back().train_top1));
    save_train_run(run, patch_png, path("patch_metrics.jsonl"), fingerprint());
    return patch_png;
}

TrainRun Experiment::load_trained_patch() {
    TrainRun run;
    run.patch = load_patch(path("patch.png"), {cfg_.model.input_hw, cfg_.model.input_hw});
    json side = json::parse(read_text_file(path("patch.png.json")));
    if (side.contains("extra")) {
        const auto& extra = side.at("extra");
        if (extra.contains("trained_classes"))
            run.trained_classes = extra.at("trained_classes").get<std::vector<int>>();
        if (extra.contains("train_config_hash"))
            run.config_hash = extra.at("train_config_hash").get<std::string>();
        if (extra.contains("seed")) run.seed = extra.at("seed").get<std::uint64_t>();
    }
    return run;
}

std::string Experiment::ensure_report(bool force) {
    const std::string report_path = path("reports/attack_report.json");
    if (!force && artifact_fresh(report_path)) {
        log("[skip] evaluate (report up to date)");
        return report_path;
    }
    ensure_patch();
    log("[run ] evaluate");
    TrainRun run = load_trained_patch();
    AttackReport report =
        evaluate_attack(model(), run.patch, test_split(), "test", eval_options(fnv1a64("eval")));
    report.config_fingerprint = fingerprint();
    write_text_file(report_path, attack_report_json(report));
    write_text_file(path("reports/attack_report.csv"), attack_report_csv({report}));
    log("attack top-1 " + std::to_string(report.adversarial.top1) + " vs control " +
        std::to_string(report.control.top1));
    return report_path;
}

void Experiment::run_pipeline(bool force) {
    ensure_model(force);
    ensure_hard_set(force);
    ensure_fused_prior(force);
    ensure_prototypes(force);
    ensure_patch(force);
    ensure_report(force);
    write_manifest();
}

std::string Experiment::write_manifest() {
    struct Entry {
        const char* name;
        std::string file;
        std::string sidecar;  // file carrying the fingerprint
    };
    const std::vector<Entry> candidates = {
        {"checkpoint", path("checkpoint.bin"), path("checkpoint.bin.json")},
        {"hard_set", path("hard/manifest.json"), path("hard/manifest.json")},
        {"fused_example", path("fused.png"), path("fused.png.json")},
        {"prior_patch", path("prior.png"), path("prior.png.json")},
        {"prototypes", path("prototypes/manifest.json"), path("prototypes/manifest.json")},
        {"trained_patch", path("patch.png"), path("patch.png.json")},
        {"attack_report", path("reports/attack_report.json"),
         path("reports/attack_report.json")},
    };

    json artifacts = json::object();
    for (const auto& e : candidates) {
        if (!fs::exists(e.file)) continue;
        json side = json::parse(read_text_file(e.sidecar));
        std::string fp;
        if (side.contains("config_fingerprint"))
            fp = side.at("config_fingerprint").get<std::string>();
        else if (side.contains("training_config_hash"))
            fp = side.at("training_config_hash").get<std::string>();
        if (fp != fingerprint())
            throw Error(std::string("manifest: artifact '") + e.name +
                        "' carries fingerprint " + fp + " but the config fingerprint is " +
                        fingerprint());
        artifacts[e.name] = {{"path", e.file}, {"file_hash", to_hex(hash_file(e.file))}};
    }

    json manifest;
    manifest["config_fingerprint"] = fingerprint();
    manifest["artifacts"] = artifacts;
    const std::string mpath = path("manifest.json");
    write_text_file(mpath, manifest.dump(2) + "\n");
    return mpath;
}

std::string Experiment::run_transfer() {
    ensure_patch();
    ensure_transfer_model();
    log("[run ] transfer");

    TrainRun run = load_trained_patch();
    const auto hw = model().input_size();
    std::vector<std::pair<Patch, std::string>> patches;
    patches.emplace_back(run.patch, model().model_id());
    patches.emplace_back(
        make_white_patch(run.patch.height(), run.patch.width(), hw, run.patch.area_budget),
        model().model_id());

    const std::vector<const Classifier*> models = {&model(), &transfer_model()};
    auto matrix =
        transfer_matrix(patches, models, test_split(), "test", eval_options(fnv1a64("transfer")));

    json j = json::array();
    std::vector<AttackReport> flat;
    for (const auto& row : matrix)
        for (const auto& cell : row) {
            AttackReport r = cell.report;
            r.config_fingerprint = fingerprint();
            j.push_back({{"patch_id", r.patch_id},
                         {"source_model", cell.patch_source_model},
                         {"eval_model", r.model_id},
                         {"white_box", cell.white_box},
                         {"adv_top1", r.adversarial.top1},
                         {"ctl_top1", r.control.top1}});
            flat.push_back(std::move(r));
            log("transfer " + flat.back().patch_id + " on " + flat.back().model_id + ": top-1 " +
                std::to_string(flat.back().adversarial.top1) + " (control " +
                std::to_string(flat.back().control.top1) + ")");
        }
    const std::string out = path("reports/transfer.json");
    write_text_file(out, j.dump(2) + "\n");
    write_text_file(path("reports/transfer.csv"), attack_report_csv(flat));
    return out;
}

std::string Experiment::run_unseen() {
    ensure_fused_prior();
    ensure_prototypes();
    log("[run ] unseen-class protocol");

    SplitPlan plan = make_unseen_half_plan(cfg_.model.num_classes, cfg_.seed ^ fnv1a64("unseen"));
    const std::vector<LabeledImage> items = prototype_items(prototype_set(), plan.train_classes);
    TrainRun run =
        train_patch(model(), items, prior_patch(), trainer_options(fnv1a64("unseen_train")));

    AttackReport report = unseen_class_eval(model(), plan, run, test_split(), "test",
                                            eval_options(fnv1a64("unseen_eval")));
    report.config_fingerprint = fingerprint();

    json j;
    j["train_classes"] = std::vector<int>(plan.train_classes.begin(), plan.train_classes.end());
    j["eval_classes"] = std::vector<int>(plan.eval_classes.begin(), plan.eval_classes.end());
    j["report"] = json::parse(attack_report_json(report));
    const std::string out = path("reports/unseen.json");
    write_text_file(out, j.dump(2) + "\n");
    log("unseen top-1 " + std::to_string(report.adversarial.top1) + " vs control " +
        std::to_string(report.control.top1));
    return out;
}

std::string Experiment::run_mixture() {
    ensure_fused_prior();
    ensure_prototypes();
    log("[run ] mixture ablation");

    const std::vector<LabeledImage> proto_pool = prototype_items(prototype_set(), std::nullopt);
    auto rows = mixture_ablation(model(), proto_pool, train_split(), cfg_.evaluator.mixture_ratios,
                                 cfg_.evaluator.mixture_total, prior_patch(),
                                 trainer_options(fnv1a64("mixture_train")), test_split(), "test",
                                 eval_options(fnv1a64("mixture_eval")),
                                 cfg_.seed ^ fnv1a64("mixture"));

    json j = json::array();
    std::ostringstream csv;
    csv << "ratio,n_prototypes,n_images,adv_top1,ctl_top1\n";
    for (const auto& row : rows) {
        j.push_back({{"ratio", row.ratio},
                     {"n_prototypes", row.n_prototypes},
                     {"n_images", row.n_images},
                     {"adv_top1", row.report.adversarial.top1},
                     {"ctl_top1", row.report.control.top1}});
        csv << row.ratio << "," << row.n_prototypes << "," << row.n_images << ","
            << row.report.adversarial.top1 << "," << row.report.control.top1 << "\n";
        log("mixture " + std::to_string(row.n_prototypes) + ":" + std::to_string(row.n_images) +
            " -> top-1 " + std::to_string(row.report.adversarial.top1));
    }
    const std::string out = path("reports/mixture.json");
    write_text_file(out, j.dump(2) + "\n");
    write_text_file(path("reports/mixture.csv"), csv.str());
    return out;
}

std::string Experiment::run_transform_ablation() {
    ensure_fused_prior();
    ensure_prototypes();
    log("[run ] transform ablation");

    std::vector<TransformKind> kinds;
    for (const auto& k : cfg_.evaluator.ablation_kinds) kinds.push_back(transform_kind_from_name(k));
    const std::vector<LabeledImage> items = prototype_items(prototype_set(), std::nullopt);
    auto rows = transform_ablation(model(), items, kinds, prior_patch(),
                                   trainer_options(fnv1a64("ablate_train")), test_split(), "test",
                                   cfg_.seed ^ fnv1a64("ablate"));

    json j = json::array();
    std::ostringstream csv;
    csv << "kind,with_eot_top1,without_eot_top1,ctl_top1\n";
    for (const auto& row : rows) {
        j.push_back({{"kind", transform_kind_name(row.kind)},
                     {"with_eot_top1", row.with_eot.adversarial.top1},
                     {"without_eot_top1", row.without_eot.adversarial.top1},
                     {"ctl_top1", row.with_eot.control.top1}});
        csv << transform_kind_name(row.kind) << "," << row.with_eot.adversarial.top1 << ","
            << row.without_eot.adversarial.top1 << "," << row.with_eot.control.top1 << "\n";
        log(std::string("ablation ") + transform_kind_name(row.kind) + ": with " +
            std::to_string(row.with_eot.adversarial.top1) + " vs without " +
            std::to_string(row.without_eot.adversarial.top1));
    }
    const std::string out = path("reports/transform_ablation.json");
    write_text_file(out, j.dump(2) + "\n");
    write_text_file(path("reports/transform_ablation.csv"), csv.str());
    return out;
}

std::string Experiment::run_boundary_probe() {
    ensure_fused_prior();
    log("[run ] boundary probe");

    const int hw = cfg_.model.input_hw;
    std::vector<PriorProbeInput> priors;
    priors.push_back({"white", Tensor(3, hw, hw, 1.0)});
    {
        Rng rng(cfg_.seed ^ fnv1a64("probe_gaussian"));
        Tensor g(3, hw, hw);
        for (double& v : g.v) v = std::clamp(rng.normal(0.5, 0.15), 0.0, 1.0);
        priors.push_back({"gaussian", std::move(g)});
    }
    {
        HardExampleSet set = hard_set();
        if (!set.items.empty())
            priors.push_back({"hard_example", set.items.front().image.pixels});
    }
    priors.push_back({"fused", fused_example().pixels});

    ProbeOptions opts;
    opts.step_size = cfg_.boundary_probe.step_size;
    opts.max_steps = cfg_.boundary_probe.max_steps;
    auto rows = compare_priors(model(), priors, opts);

    json j = json::array();
    for (const auto& row : rows) {
        j.push_back({{"prior", row.name},
                     {"mean_steps", row.mean_steps},
                     {"median_steps", row.median_steps},
                     {"saturated", row.saturated}});
        log("probe " + row.name + ": mean " + std::to_string(row.mean_steps) + " steps (" +
            std::to_string(row.saturated) + " saturated)");
    }
    const std::string out = path("reports/boundary.json");
    write_text_file(out, j.dump(2) + "\n");
    write_text_file(path("reports/boundary.csv"), prior_comparison_csv(rows));

    std::vector<std::pair<std::string, double>> bars;
    for (const auto& row : rows) bars.emplace_back(row.name, std::max(row.mean_steps, 1e-9));
    plot_bars(path("reports/prior_comparison.png"), bars, "MEAN PGD STEPS PER PRIOR");
    return out;
}

void Experiment::print_report(std::ostream& out) {
    const std::string mpath = path("manifest.json");
    if (!fs::exists(mpath))
        throw IoError("report: no manifest at " + mpath + "; run the pipeline first");
    json manifest = json::parse(read_text_file(mpath));
    out << "experiment fingerprint: "
        << manifest.at("config_fingerprint").get<std::string>() << "\n";

    if (fs::exists(path("model_metrics.json"))) {
        json m = json::parse(read_text_file(path("model_metrics.json")));
        out << "clean top-1: " << m.at("clean_top1").get<double>() << "\n";
    }

    if (fs::exists(path("reports/attack_report.json"))) {
        AttackReport r = attack_report_from_json(read_text_file(path("reports/attack_report.json")));
        out << "\nattack report (model " << r.model_id << ", split " << r.split_id << ", n="
            << r.n_samples << ")\n";
        out << "              top-1     top-3     top-5\n";
        char buf[128];
        std::snprintf(buf, sizeof(buf), "  adversarial %.4f    %.4f    %.4f\n",
                      r.adversarial.top1, r.adversarial.top3, r.adversarial.top5);
        out << buf;
        std::snprintf(buf, sizeof(buf), "  white ctl   %.4f    %.4f    %.4f\n", r.control.top1,
                      r.control.top3, r.control.top5);
        out << buf;
        out << "  per-class adversarial top-1:";
        for (const auto& [cls, acc] : r.adversarial.per_class_top1)
            out << " " << cls << ":" << acc;
        out << "\n";
    }

    if (fs::exists(path("patch_metrics.jsonl"))) {
        Series loss{"LOSS", {}}, top1{"TOP1", {}};
        std::istringstream lines(read_text_file(path("patch_metrics.jsonl")));
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            json row = json::parse(line);
            loss.values.push_back(row.at("mean_loss").get<double>());
            top1.values.push_back(row.at("train_top1").get<double>());
        }
        if (loss.values.size() >= 2) {
            plot_lines(path("reports/training_curve.png"), {loss, top1}, "PATCH TRAINING");
            out << "wrote " << path("reports/training_curve.png") << "\n";
        }
    }

    for (const char* extra : {"reports/transfer.json", "reports/unseen.json",
                              "reports/mixture.json", "reports/transform_ablation.json",
                              "reports/boundary.json"}) {
        if (fs::exists(path(extra))) out << "extra report: " << path(extra) << "\n";
    }
    if (fs::exists(path("reports/prior_comparison.png")))
        out << "wrote " << path("reports/prior_comparison.png") << "\n";
}

}  // namespace uapatch
