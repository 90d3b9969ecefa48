#include "uapatch/boundary_probe.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "uapatch/errors.hpp"

namespace uapatch {

using json = nlohmann::json;

double BoundaryReport::mean_steps() const {
    if (per_class_steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [cls, steps] : per_class_steps) s += steps;
    return s / static_cast<double>(per_class_steps.size());
}

double BoundaryReport::median_steps() const {
    if (per_class_steps.empty()) return 0.0;
    std::vector<int> v;
    v.reserve(per_class_steps.size());
    for (const auto& [cls, steps] : per_class_steps) v.push_back(steps);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BoundaryReport boundary_distance(const Classifier& handle, const Tensor& image,
                                 const std::string& image_id,
                                 const std::vector<int>& target_class_set,
                                 const ProbeOptions& opts, std::optional<int> expected_label) {
    if (!(opts.step_size > 0.0)) throw ValidationError("boundary_distance: step size must be > 0");
    if (opts.max_steps < 1) throw ValidationError("boundary_distance: max_steps must be >= 1");
    if (!in_unit_range(image)) throw ValidationError("boundary_distance: image outside [0, 1]");

    BoundaryReport report;
    report.source_image_id = image_id;
    report.step_size = opts.step_size;
    report.max_steps = opts.max_steps;

    const int original = handle.predict(image).label;
    report.original_prediction = original;
    if (expected_label && *expected_label != original)
        report.warning = "image already classified as " + std::to_string(original) +
                         " (expected " + std::to_string(*expected_label) +
                         "); probing from the model's own prediction";

    std::vector<int> targets = target_class_set;
    if (targets.empty()) {
        for (int c = 0; c < handle.num_classes(); ++c)
            if (c != original) targets.push_back(c);
    }

    for (int target : targets) {
        if (target < 0 || target >= handle.num_classes())
            throw ValidationError("boundary_distance: target class out of range");
        if (target == original) continue;

        Tensor x = image;
        bool flipped = false;
        for (int step = 1; step <= opts.max_steps; ++step) {
            // Ascend the target-class logit with an L2-normalized step.
            auto acts = handle.net().forward(x);
            GradSeeds seeds;
            seeds.logit_grad.assign(handle.num_classes(), 0.0);
            seeds.logit_grad[target] = 1.0;
            Tensor g = handle.net().backward(x, acts, seeds);
            double norm = 0.0;
            for (double gv : g.v) norm += gv * gv;
            norm = std::sqrt(norm);
            if (norm <= 1e-30) break;  // dead gradient: counts as saturated
            for (std::size_t j = 0; j < x.v.size(); ++j)
                x.v[j] = std::clamp(x.v[j] + opts.step_size * g.v[j] / norm, 0.0, 1.0);
            if (handle.predict(x).label != original) {
                report.per_class_steps[target] = step;
                flipped = true;
                break;
            }
        }
        if (!flipped) report.saturated_directions.push_back(target);
    }
    return report;
}

std::vector<PriorComparisonRow> compare_priors(const Classifier& handle,
                                               const std::vector<PriorProbeInput>& priors,
                                               const ProbeOptions& opts) {
    if (priors.size() < 2) throw ValidationError("compare_priors: need at least 2 priors");
    const auto [H, W] = handle.input_size();

    std::vector<PriorComparisonRow> rows;
    for (const auto& prior : priors) {
        Tensor probe_image;
        if (prior.pixels.h == H && prior.pixels.w == W) {
            probe_image = prior.pixels;
        } else {
            if (prior.pixels.h > H || prior.pixels.w > W)
                throw ValidationError("compare_priors: prior larger than model input");
            // Patch-sized prior embedded at the center of a gray canvas.
            probe_image = Tensor(3, H, W, 0.5);
            const int top = (H - prior.pixels.h) / 2;
            const int left = (W - prior.pixels.w) / 2;
            for (int ci = 0; ci < 3; ++ci)
                for (int y = 0; y < prior.pixels.h; ++y)
                    for (int x = 0; x < prior.pixels.w; ++x)
                        probe_image.at(ci, top + y, left + x) = prior.pixels.at(ci, y, x);
        }
        BoundaryReport rep = boundary_distance(handle, probe_image, prior.name, {}, opts);
        PriorComparisonRow row;
        row.name = prior.name;
        row.mean_steps = rep.mean_steps();
        row.median_steps = rep.median_steps();
        row.saturated = static_cast<int>(rep.saturated_directions.size());
        row.report = std::move(rep);
        rows.push_back(std::move(row));
    }

    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.saturated != b.saturated) return a.saturated < b.saturated;
        return a.mean_steps < b.mean_steps;
    });
    return rows;
}

std::string boundary_report_json(const BoundaryReport& report) {
    json j;
    j["source_image_id"] = report.source_image_id;
    j["original_prediction"] = report.original_prediction;
    json steps = json::object();
    for (const auto& [cls, s] : report.per_class_steps) steps[std::to_string(cls)] = s;
    j["per_class_steps"] = steps;
    j["saturated_directions"] = report.saturated_directions;
    j["step_size"] = report.step_size;
    j["max_steps"] = report.max_steps;
    j["mean_steps"] = report.mean_steps();
    j["median_steps"] = report.median_steps();
    if (report.warning) j["warning"] = *report.warning;
    return j.dump(2) + "\n";
}

std::string prior_comparison_csv(const std::vector<PriorComparisonRow>& rows) {
    std::ostringstream ss;
    ss << "prior,mean_steps,median_steps,saturated_directions\n";
    for (const auto& r : rows)
        ss << r.name << "," << r.mean_steps << "," << r.median_steps << "," << r.saturated << "\n";
    return ss.str();
}

}  // namespace uapatch
