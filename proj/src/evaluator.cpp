#include "uapatch/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "uapatch/errors.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using json = nlohmann::json;

namespace {

struct ScheduleEntry {
    Placement placement;
    TransformInstance transform;
};

// One schedule drives both the adversarial and the control pass, so the two
// sides consume identical placements and transform draws by construction.
struct EvalSchedule {
    std::vector<ScheduleEntry> entries;
    std::string draw_log_hash;
};

EvalSchedule build_schedule(const std::vector<LabeledImage>& split,
                            std::pair<int, int> image_hw, std::pair<int, int> patch_hw,
                            const EvalOptions& opts) {
    EvalSchedule sched;
    Rng rng(opts.seed);
    std::ostringstream log;
    for (std::size_t i = 0; i < split.size(); ++i) {
        ScheduleEntry e;
        if (opts.placement_override)
            e.placement = *opts.placement_override;
        else
            e.placement = sample_placement(rng, image_hw, patch_hw, opts.placement_policy);
        if (opts.transforms) e.transform = sample_transform(*opts.transforms, rng);
        log << i << ":" << e.placement.top << "," << e.placement.left << ";"
            << e.transform.describe() << "\n";
        sched.entries.push_back(e);
    }
    sched.draw_log_hash = to_hex(fnv1a64(log.str()));
    return sched;
}

struct TopKCounters {
    std::map<int, int> per_class_n;
    std::map<int, int> per_class_top1;
    std::map<int, int> per_class_top3;
    std::map<int, int> per_class_top5;

    void add(const std::vector<double>& probs, int label) {
        // Rank classes by probability, lowest index first on ties.
        std::vector<int> idx(probs.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return probs[a] > probs[b]; });
        int rank = 0;
        for (std::size_t r = 0; r < idx.size(); ++r)
            if (idx[r] == label) {
                rank = static_cast<int>(r);
                break;
            }
        per_class_n[label] += 1;
        if (rank < 1) per_class_top1[label] += 1;
        if (rank < 3) per_class_top3[label] += 1;
        if (rank < 5) per_class_top5[label] += 1;
    }

    AttackMetrics metrics() const {
        AttackMetrics m;
        double s1 = 0.0, s3 = 0.0, s5 = 0.0;
        for (const auto& [cls, n] : per_class_n) {
            const double a1 = lookup(per_class_top1, cls) / static_cast<double>(n);
            const double a3 = lookup(per_class_top3, cls) / static_cast<double>(n);
            const double a5 = lookup(per_class_top5, cls) / static_cast<double>(n);
            m.per_class_top1[cls] = a1;
            s1 += a1;
            s3 += a3;
            s5 += a5;
        }
        const double k = per_class_n.empty() ? 1.0 : static_cast<double>(per_class_n.size());
        m.top1 = s1 / k;
        m.top3 = s3 / k;
        m.top5 = s5 / k;
        return m;
    }

private:
    static int lookup(const std::map<int, int>& m, int key) {
        auto it = m.find(key);
        return it == m.end() ? 0 : it->second;
    }
};

AttackMetrics run_pass(const Classifier& handle, const Patch& patch,
                       const std::vector<LabeledImage>& split, const EvalSchedule& sched) {
    TopKCounters counters;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const auto& entry = sched.entries[i];
        Tensor img = apply_patch(split[i].pixels, patch, entry.placement);
        img = apply_transform(entry.transform, img);
        counters.add(handle.predict(img).probabilities, split[i].label);
    }
    return counters.metrics();
}

void check_report_invariants(const AttackMetrics& m) {
    if (!(m.top1 <= m.top3 + 1e-12 && m.top3 <= m.top5 + 1e-12))
        throw Error("attack report violates top1 <= top3 <= top5");
}

}  // namespace

AttackReport evaluate_attack(const Classifier& handle, const Patch& patch,
                             const std::vector<LabeledImage>& split, const std::string& split_id,
                             const EvalOptions& opts) {
    if (split.empty()) throw ValidationError("evaluate_attack: empty split");
    if (opts.transforms) opts.transforms->validate();
    const auto [H, W] = handle.input_size();
    for (const auto& item : split)
        if (item.pixels.h != H || item.pixels.w != W)
            throw ShapeError("evaluate_attack: sample size does not match model input");

    const EvalSchedule sched =
        build_schedule(split, {H, W}, {patch.height(), patch.width()}, opts);

    AttackReport report;
    report.patch_id = patch.id;
    report.model_id = handle.model_id();
    report.split_id = split_id;
    report.n_samples = static_cast<int>(split.size());
    report.draw_log_hash = sched.draw_log_hash;
    report.adversarial = run_pass(handle, patch, split, sched);

    const Patch control =
        make_white_patch(patch.height(), patch.width(), {H, W}, patch.area_budget);
    report.control = run_pass(handle, control, split, sched);

    check_report_invariants(report.adversarial);
    check_report_invariants(report.control);
    return report;
}

std::vector<std::vector<TransferCell>> transfer_matrix(
    const std::vector<std::pair<Patch, std::string>>& patches,
    const std::vector<const Classifier*>& models, const std::vector<LabeledImage>& split,
    const std::string& split_id, const EvalOptions& opts) {
    if (patches.empty() || models.empty())
        throw ValidationError("transfer_matrix: need at least one patch and one model");
    for (const Classifier* m : models) {
        const auto [h, w] = m->input_size();
        for (const auto& [patch, src] : patches)
            if (patch.height() > h || patch.width() > w)
                throw ValidationError("transfer_matrix: patch does not fit model input of " +
                                      m->model_id());
        if (split.front().pixels.h != h || split.front().pixels.w != w)
            throw ValidationError("transfer_matrix: split size does not match model input of " +
                                  m->model_id());
    }

    std::vector<std::vector<TransferCell>> matrix;
    for (const auto& [patch, source] : patches) {
        std::vector<TransferCell> row;
        for (const Classifier* model : models) {
            TransferCell cell;
            cell.patch_source_model = source;
            cell.white_box = source == model->model_id();
            cell.report = evaluate_attack(*model, patch, split, split_id, opts);
            row.push_back(std::move(cell));
        }
        matrix.push_back(std::move(row));
    }
    return matrix;
}

void SplitPlan::validate(int num_classes) const {
    if (mode == SplitPlanMode::All) return;
    for (int c : train_classes)
        if (eval_classes.count(c)) throw ProtocolError("split plan: train and eval overlap");
    std::set<int> all = train_classes;
    all.insert(eval_classes.begin(), eval_classes.end());
    if (static_cast<int>(all.size()) != num_classes)
        throw ProtocolError("split plan: train and eval must cover all classes");
}

SplitPlan make_unseen_half_plan(int num_classes, std::uint64_t seed) {
    if (num_classes < 2) throw ValidationError("make_unseen_half_plan: need >= 2 classes");
    std::vector<int> classes(num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    Rng rng(seed);
    rng.shuffle(classes);
    SplitPlan plan;
    plan.mode = SplitPlanMode::UnseenHalf;
    for (int i = 0; i < num_classes; ++i)
        (i < num_classes / 2 ? plan.train_classes : plan.eval_classes).insert(classes[i]);
    return plan;
}

AttackReport unseen_class_eval(const Classifier& handle, const SplitPlan& plan,
                               const TrainRun& training_artifacts,
                               const std::vector<LabeledImage>& split,
                               const std::string& split_id, const EvalOptions& opts) {
    plan.validate(handle.num_classes());
    if (plan.mode == SplitPlanMode::All)
        return evaluate_attack(handle, training_artifacts.patch, split, split_id, opts);

    for (int c : training_artifacts.trained_classes)
        if (plan.eval_classes.count(c))
            throw ProtocolError("unseen_class_eval: patch was trained on eval class " +
                                std::to_string(c));

    std::vector<LabeledImage> eval_items;
    for (const auto& item : split)
        if (plan.eval_classes.count(item.label)) eval_items.push_back(item);
    if (eval_items.empty())
        throw ValidationError("unseen_class_eval: split has no eval-class samples");

    return evaluate_attack(handle, training_artifacts.patch, eval_items,
                           split_id + "/unseen", opts);
}

std::vector<MixtureRow> mixture_ablation(const Classifier& handle,
                                         const std::vector<LabeledImage>& prototype_pool,
                                         const std::vector<LabeledImage>& image_pool,
                                         const std::vector<double>& ratios, int total_n,
                                         const Patch& prior, const TrainPatchOptions& train_opts,
                                         const std::vector<LabeledImage>& eval_split,
                                         const std::string& split_id, const EvalOptions& eval_opts,
                                         std::uint64_t seed) {
    if (ratios.empty()) throw ValidationError("mixture_ablation: no ratios");
    if (total_n <= 0) throw ValidationError("mixture_ablation: total_n must be positive");

    // One shared, seeded ordering of both pools keeps the budgets identical
    // across ratios.
    std::vector<int> proto_order(prototype_pool.size()), image_order(image_pool.size());
    std::iota(proto_order.begin(), proto_order.end(), 0);
    std::iota(image_order.begin(), image_order.end(), 0);
    Rng rng(seed);
    rng.shuffle(proto_order);
    rng.shuffle(image_order);

    std::vector<MixtureRow> rows;
    for (double ratio : ratios) {
        if (ratio < 0.0 || ratio > 1.0)
            throw ValidationError("mixture_ablation: ratio must be in [0, 1]");
        const int n_proto = static_cast<int>(std::lround(ratio * total_n));
        const int n_image = total_n - n_proto;
        if (n_proto > static_cast<int>(prototype_pool.size()) ||
            n_image > static_cast<int>(image_pool.size()))
            throw ValidationError("mixture_ablation: pools too small for total_n");

        std::vector<LabeledImage> train_items;
        train_items.reserve(total_n);
        for (int i = 0; i < n_proto; ++i) train_items.push_back(prototype_pool[proto_order[i]]);
        for (int i = 0; i < n_image; ++i) train_items.push_back(image_pool[image_order[i]]);

        TrainPatchOptions opts = train_opts;
        opts.seed = seed ^ fnv1a64("mixture/" + std::to_string(ratio));
        TrainRun run = train_patch(handle, train_items, prior, opts);

        MixtureRow row;
        row.ratio = ratio;
        row.n_prototypes = n_proto;
        row.n_images = n_image;
        row.report = evaluate_attack(handle, run.patch, eval_split, split_id, eval_opts);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TransformAblationRow> transform_ablation(
    const Classifier& handle, const std::vector<LabeledImage>& train_items,
    const std::vector<TransformKind>& kinds, const Patch& prior,
    const TrainPatchOptions& train_opts, const std::vector<LabeledImage>& eval_split,
    const std::string& split_id, std::uint64_t seed) {
    if (kinds.empty()) throw ValidationError("transform_ablation: no transform kinds");

    std::vector<TransformAblationRow> rows;
    for (TransformKind kind : kinds) {
        const TransformConfig kind_cfg = TransformConfig::single_kind(kind);

        TrainPatchOptions with_opts = train_opts;
        with_opts.transform_cfg = kind_cfg;
        with_opts.seed = seed ^ fnv1a64(std::string("ablate/with/") + transform_kind_name(kind));
        TrainRun with_run = train_patch(handle, train_items, prior, with_opts);

        TrainPatchOptions without_opts = train_opts;
        without_opts.transform_cfg = std::nullopt;
        without_opts.seed =
            seed ^ fnv1a64(std::string("ablate/without/") + transform_kind_name(kind));
        TrainRun without_run = train_patch(handle, train_items, prior, without_opts);

        // Both patches face the same test-time transform draws.
        EvalOptions eval_opts;
        eval_opts.placement_policy = PlacementPolicy::FixedCenter;
        eval_opts.transforms = kind_cfg;
        eval_opts.seed = seed ^ fnv1a64(std::string("ablate/eval/") + transform_kind_name(kind));

        TransformAblationRow row{kind,
                                 evaluate_attack(handle, with_run.patch, eval_split, split_id,
                                                 eval_opts),
                                 evaluate_attack(handle, without_run.patch, eval_split, split_id,
                                                 eval_opts)};
        if (row.with_eot.draw_log_hash != row.without_eot.draw_log_hash)
            throw Error("transform_ablation: paired draw logs diverged");
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

json metrics_to_json(const AttackMetrics& m) {
    json per_class = json::object();
    for (const auto& [cls, acc] : m.per_class_top1) per_class[std::to_string(cls)] = acc;
    return {{"top1", m.top1}, {"top3", m.top3}, {"top5", m.top5}, {"per_class_top1", per_class}};
}

AttackMetrics metrics_from_json(const json& j) {
    AttackMetrics m;
    m.top1 = j.at("top1").get<double>();
    m.top3 = j.at("top3").get<double>();
    m.top5 = j.at("top5").get<double>();
    for (const auto& [key, val] : j.at("per_class_top1").items())
        m.per_class_top1[std::stoi(key)] = val.get<double>();
    return m;
}

}  // namespace

std::string attack_report_json(const AttackReport& report) {
    json j;
    j["patch_id"] = report.patch_id;
    j["model_id"] = report.model_id;
    j["split_id"] = report.split_id;
    j["n_samples"] = report.n_samples;
    j["adversarial"] = metrics_to_json(report.adversarial);
    j["control"] = metrics_to_json(report.control);
    j["draw_log_hash"] = report.draw_log_hash;
    j["config_fingerprint"] = report.config_fingerprint;
    return j.dump(2) + "\n";
}

AttackReport attack_report_from_json(const std::string& text) {
    json j = json::parse(text);
    AttackReport r;
    r.patch_id = j.at("patch_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.split_id = j.at("split_id").get<std::string>();
    r.n_samples = j.at("n_samples").get<int>();
    r.adversarial = metrics_from_json(j.at("adversarial"));
    r.control = metrics_from_json(j.at("control"));
    r.draw_log_hash = j.at("draw_log_hash").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    return r;
}

std::string attack_report_csv(const std::vector<AttackReport>& reports) {
    std::ostringstream ss;
    ss << "patch_id,model_id,split_id,n_samples,adv_top1,adv_top3,adv_top5,"
          "ctl_top1,ctl_top3,ctl_top5\n";
    for (const auto& r : reports)
        ss << r.patch_id << "," << r.model_id << "," << r.split_id << "," << r.n_samples << ","
           << r.adversarial.top1 << "," << r.adversarial.top3 << "," << r.adversarial.top5 << ","
           << r.control.top1 << "," << r.control.top3 << "," << r.control.top5 << "\n";
    return ss.str();
}

}  // namespace uapatch
