#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uapatch/model_zoo.hpp"

namespace uapatch {

enum class MiningCriterion { Misclassified, LowConfidence, Union };

MiningCriterion mining_criterion_from_name(const std::string& s);
const char* mining_criterion_name(MiningCriterion c);

struct HardItem {
    LabeledImage image;
    int dataset_index = 0;
    int predicted = 0;
    double true_class_confidence = 0.0;
};

// The mined set that seeds prior fusion. Items are ranked by ascending
// true-class confidence; a shortage (fewer qualifying items than requested)
// is reported on the record, not raised.
struct HardExampleSet {
    std::vector<HardItem> items;
    std::string source_split;
    MiningCriterion criterion = MiningCriterion::Union;
    double confidence_threshold = 0.5;
    int requested = 0;
    std::optional<std::string> shortage_warning;

    int distinct_label_count() const;
};

HardExampleSet mine_hard_examples(const Classifier& handle,
                                  const std::vector<LabeledImage>& dataset,
                                  const std::string& split_id, int count,
                                  MiningCriterion criterion, double confidence_threshold);

// Manifest JSON: item paths (when images were exported), labels, confidences,
// criterion and seed provenance. `png_dir` empty skips image export.
void save_hard_set(const HardExampleSet& set, const std::string& manifest_path,
                   const std::string& png_dir, const std::string& config_fingerprint);
HardExampleSet load_hard_set(const std::string& manifest_path);

}  // namespace uapatch
