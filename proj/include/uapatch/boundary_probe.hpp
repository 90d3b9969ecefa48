#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uapatch/model_zoo.hpp"
#include "uapatch/patch_core.hpp"

namespace uapatch {

// Per-direction distance to the decision boundary, measured as the smallest
// number of fixed-size L2-normalized gradient steps toward a target class
// until the model's prediction changes. Directions that never flip within
// max_steps are marked saturated rather than reported as a step count.
struct BoundaryReport {
    std::string source_image_id;
    int original_prediction = 0;
    std::map<int, int> per_class_steps;      // non-saturated directions only
    std::vector<int> saturated_directions;
    double step_size = 0.01;
    int max_steps = 500;
    std::optional<std::string> warning;

    double mean_steps() const;    // over non-saturated directions
    double median_steps() const;
};

struct ProbeOptions {
    double step_size = 0.01;
    int max_steps = 500;
};

// Target set empty means "every class other than the model's prediction".
// `expected_label` triggers a warning (not an error) when the model already
// disagrees; the probe proceeds from the model's own prediction.
BoundaryReport boundary_distance(const Classifier& handle, const Tensor& image,
                                 const std::string& image_id,
                                 const std::vector<int>& target_class_set,
                                 const ProbeOptions& opts,
                                 std::optional<int> expected_label = std::nullopt);

struct PriorProbeInput {
    std::string name;
    Tensor pixels;  // patch-sized or image-sized
};

struct PriorComparisonRow {
    std::string name;
    double mean_steps = 0.0;
    double median_steps = 0.0;
    int saturated = 0;
    BoundaryReport report;
};

// Probes each prior and ranks by mean step count (ascending). Patch-sized
// inputs are embedded at the center of a neutral gray canvas first;
// image-sized inputs are probed directly.
std::vector<PriorComparisonRow> compare_priors(const Classifier& handle,
                                               const std::vector<PriorProbeInput>& priors,
                                               const ProbeOptions& opts);

std::string boundary_report_json(const BoundaryReport& report);
std::string prior_comparison_csv(const std::vector<PriorComparisonRow>& rows);

}  // namespace uapatch
