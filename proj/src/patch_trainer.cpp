#include "uapatch/patch_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "uapatch/errors.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using json = nlohmann::json;

double attack_margin(const std::vector<double>& probs, int target) {
    if (target < 0 || target >= static_cast<int>(probs.size()))
        throw ValidationError("attack_margin: target out of range");
    double other = -1.0;
    for (std::size_t c = 0; c < probs.size(); ++c)
        if (static_cast<int>(c) != target) other = std::max(other, probs[c]);
    return probs[target] - other;
}

namespace {

// d(margin)/d(logits) through the softmax: +1 at the target probability,
// -1 at the strongest competitor (lowest index on ties).
std::vector<double> attack_margin_logit_grad(const std::vector<double>& probs, int target) {
    int competitor = target == 0 ? 1 : 0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        if (static_cast<int>(c) == target) continue;
        if (probs[c] > probs[competitor]) competitor = static_cast<int>(c);
    }
    std::vector<double> g(probs.size(), 0.0);
    const double diff = probs[target] - probs[competitor];
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const double dt = static_cast<int>(j) == target ? 1.0 : 0.0;
        const double dc = static_cast<int>(j) == competitor ? 1.0 : 0.0;
        g[j] = probs[j] * ((dt - dc) - diff);
    }
    return g;
}

struct SampleEval {
    double loss = 0.0;
    Tensor patch_grad;  // (3, ph, pw); empty when gradients not requested
};

// One (item, placement) pair averaged over the configured transform draws.
SampleEval eval_sample(const Classifier& handle, const LabeledImage& item, const Patch& patch,
                       const Placement& placement,
                       const std::optional<TransformConfig>& transform_cfg, Rng& rng,
                       bool want_grad) {
    const Tensor patched = apply_patch(item.pixels, patch, placement);
    const int draws = transform_cfg ? transform_cfg->samples_per_step : 1;

    SampleEval ev;
    if (want_grad) ev.patch_grad = Tensor(3, patch.height(), patch.width(), 0.0);

    for (int d = 0; d < draws; ++d) {
        TransformInstance inst;
        if (transform_cfg) inst = sample_transform(*transform_cfg, rng);
        const Tensor warped = apply_transform(inst, patched);
        auto acts = handle.net().forward(warped);
        const std::vector<double> probs = softmax(handle.net().logits_from(acts));
        ev.loss += attack_margin(probs, item.label);
        if (want_grad) {
            GradSeeds seeds;
            seeds.logit_grad = attack_margin_logit_grad(probs, item.label);
            Tensor g_image = handle.net().backward(warped, acts, seeds);
            g_image = apply_transform_backward(inst, {item.pixels.h, item.pixels.w}, g_image);
            // Only the masked rectangle reaches the patch.
            for (int ci = 0; ci < 3; ++ci)
                for (int y = 0; y < patch.height(); ++y)
                    for (int x = 0; x < patch.width(); ++x)
                        ev.patch_grad.at(ci, y, x) +=
                            g_image.at(ci, placement.top + y, placement.left + x);
        }
    }
    ev.loss /= draws;
    if (want_grad)
        for (double& g : ev.patch_grad.v) g /= draws;
    return ev;
}

}  // namespace

double adversarial_loss(const Classifier& handle, const std::vector<LabeledImage>& batch,
                        const Patch& patch, const std::vector<Placement>& placements,
                        const std::optional<TransformConfig>& transform_cfg, Rng& rng) {
    if (batch.empty()) throw ValidationError("adversarial_loss: empty batch");
    if (placements.size() != batch.size())
        throw ValidationError("adversarial_loss: placements must match batch size");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        total += eval_sample(handle, batch[i], patch, placements[i], transform_cfg, rng, false)
                     .loss;
    return total / static_cast<double>(batch.size());
}

TrainRun train_patch(const Classifier& handle, const std::vector<LabeledImage>& items,
                     const Patch& prior, const TrainPatchOptions& opts) {
    if (items.empty()) throw ValidationError("train_patch: no training items");
    std::set<int> classes;
    for (const auto& it : items) classes.insert(it.label);
    if (classes.size() < 2)
        throw ValidationError("train_patch: training items must span at least 2 classes");
    const auto [H, W] = handle.input_size();
    for (const auto& it : items)
        if (it.pixels.h != H || it.pixels.w != W)
            throw ShapeError("train_patch: item size does not match model input");
    if (prior.height() > H || prior.width() > W)
        throw ValidationError("train_patch: prior does not fit the model input");
    if (opts.transform_cfg) opts.transform_cfg->validate();

    TrainRun run;
    run.seed = opts.seed;
    run.trained_classes.assign(classes.begin(), classes.end());
    run.patch = prior;
    run.patch.id = "trained";
    run.patch.provenance = Provenance::Trained;

    {
        json cfg = {{"epochs", opts.epochs},
                    {"batch_size", opts.batch_size},
                    {"lr", opts.lr},
                    {"weight_decay", opts.weight_decay},
                    {"placement", placement_policy_name(opts.placement_policy)},
                    {"eot", opts.transform_cfg.has_value()},
                    {"seed", opts.seed},
                    {"items", items.size()}};
        run.config_hash = to_hex(fnv1a64(cfg.dump()));
    }
    if (opts.epochs == 0) return run;

    Rng rng(opts.seed);
    AdamState adam(run.patch.pixels.size(), opts.lr, opts.weight_decay);

    const int n = static_cast<int>(items.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int epoch_samples = 0;
        for (int start = 0; start < n; start += opts.batch_size) {
            const int end = std::min(n, start + opts.batch_size);
            Tensor grad(3, run.patch.height(), run.patch.width(), 0.0);
            double batch_loss = 0.0;
            for (int bi = start; bi < end; ++bi) {
                const LabeledImage& item = items[order[bi]];
                const Placement pl = sample_placement(
                    rng, {H, W}, {run.patch.height(), run.patch.width()}, opts.placement_policy);
                SampleEval ev =
                    eval_sample(handle, item, run.patch, pl, opts.transform_cfg, rng, true);
                batch_loss += ev.loss;
                for (std::size_t j = 0; j < grad.v.size(); ++j) grad.v[j] += ev.patch_grad.v[j];
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (double& g : grad.v) g *= inv;
            if (!all_finite(grad) || !std::isfinite(batch_loss)) {
                json trace = json::array();
                for (const auto& m : run.epoch_metrics)
                    trace.push_back({{"epoch", m.epoch}, {"mean_loss", m.mean_loss}});
                throw OptimizationError("train_patch: non-finite loss/gradient", trace.dump());
            }
            adam.step(run.patch.pixels.v, grad.v);
            clamp01(run.patch.pixels);
            epoch_loss += batch_loss;
            epoch_samples += end - start;
        }

        // Deterministic per-epoch readout: centered patch, no transforms.
        int still_correct = 0;
        const Placement center = sample_placement(
            rng, {H, W}, {run.patch.height(), run.patch.width()}, PlacementPolicy::FixedCenter);
        for (const auto& item : items) {
            const Tensor patched = apply_patch(item.pixels, run.patch, center);
            if (handle.predict(patched).label == item.label) ++still_correct;
        }
        run.epoch_metrics.push_back({epoch, epoch_loss / epoch_samples,
                                     static_cast<double>(still_correct) / n});
    }
    return run;
}

void save_train_run(const TrainRun& run, const std::string& png_path,
                    const std::string& metrics_jsonl_path,
                    const std::string& config_fingerprint) {
    PatchMeta meta;
    meta.config_fingerprint = config_fingerprint;
    json extra;
    extra["train_config_hash"] = run.config_hash;
    extra["seed"] = run.seed;
    extra["trained_classes"] = run.trained_classes;
    meta.extra_json = extra.dump();
    save_patch(run.patch, png_path, meta);

    std::ostringstream lines;
    for (const auto& m : run.epoch_metrics) {
        json row = {{"epoch", m.epoch}, {"mean_loss", m.mean_loss}, {"train_top1", m.train_top1}};
        lines << row.dump() << "\n";
    }
    write_text_file(metrics_jsonl_path, lines.str());
}

}  // namespace uapatch
