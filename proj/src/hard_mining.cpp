#include "uapatch/hard_mining.hpp"

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>

#include "uapatch/errors.hpp"
#include "uapatch/png_io.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using json = nlohmann::json;

MiningCriterion mining_criterion_from_name(const std::string& s) {
    if (s == "misclassified") return MiningCriterion::Misclassified;
    if (s == "low_confidence") return MiningCriterion::LowConfidence;
    if (s == "union") return MiningCriterion::Union;
    throw ValidationError("unknown mining criterion '" + s + "'");
}

const char* mining_criterion_name(MiningCriterion c) {
    switch (c) {
        case MiningCriterion::Misclassified: return "misclassified";
        case MiningCriterion::LowConfidence: return "low_confidence";
        case MiningCriterion::Union: return "union";
    }
    return "?";
}

int HardExampleSet::distinct_label_count() const {
    std::set<int> labels;
    for (const auto& it : items) labels.insert(it.image.label);
    return static_cast<int>(labels.size());
}

HardExampleSet mine_hard_examples(const Classifier& handle,
                                  const std::vector<LabeledImage>& dataset,
                                  const std::string& split_id, int count,
                                  MiningCriterion criterion, double confidence_threshold) {
    if (dataset.empty()) throw ValidationError("mine_hard_examples: empty dataset");
    if (count <= 0) throw ValidationError("mine_hard_examples: count must be positive");
    if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0))
        throw ValidationError("mine_hard_examples: threshold must be in (0, 1]");

    std::vector<HardItem> qualifying;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const LabeledImage& item = dataset[i];
        if (item.label < 0 || item.label >= handle.num_classes())
            throw ValidationError("mine_hard_examples: label out of range at index " +
                                  std::to_string(i));
        Prediction pred = handle.predict(item.pixels);
        const double conf = pred.probabilities[item.label];
        const bool miscls = pred.label != item.label;
        const bool lowconf = conf < confidence_threshold;
        bool keep = false;
        switch (criterion) {
            case MiningCriterion::Misclassified: keep = miscls; break;
            case MiningCriterion::LowConfidence: keep = lowconf; break;
            case MiningCriterion::Union: keep = miscls || lowconf; break;
        }
        if (keep) qualifying.push_back({item, static_cast<int>(i), pred.label, conf});
    }

    // Ascending true-class confidence; dataset order breaks ties so the
    // result is deterministic for a fixed (model, dataset) pair.
    std::stable_sort(qualifying.begin(), qualifying.end(), [](const HardItem& a, const HardItem& b) {
        return a.true_class_confidence < b.true_class_confidence;
    });
    if (static_cast<int>(qualifying.size()) > count) qualifying.resize(count);

    HardExampleSet set;
    set.items = std::move(qualifying);
    set.source_split = split_id;
    set.criterion = criterion;
    set.confidence_threshold = confidence_threshold;
    set.requested = count;
    if (static_cast<int>(set.items.size()) < count)
        set.shortage_warning = "requested " + std::to_string(count) + " hard examples, found " +
                               std::to_string(set.items.size());
    if (set.distinct_label_count() < 2 && !set.shortage_warning)
        set.shortage_warning = "hard set spans fewer than 2 distinct labels";
    return set;
}

void save_hard_set(const HardExampleSet& set, const std::string& manifest_path,
                   const std::string& png_dir, const std::string& config_fingerprint) {
    json m;
    m["source_split"] = set.source_split;
    m["criterion"] = mining_criterion_name(set.criterion);
    m["confidence_threshold"] = set.confidence_threshold;
    m["requested"] = set.requested;
    m["config_fingerprint"] = config_fingerprint;
    if (set.shortage_warning) m["shortage_warning"] = *set.shortage_warning;
    json items = json::array();
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        const HardItem& it = set.items[i];
        std::string path;
        if (!png_dir.empty()) {
            std::filesystem::create_directories(png_dir);
            path = png_dir + "/hard_" + std::to_string(i) + ".png";
            write_png(path, it.image.pixels);
        }
        items.push_back({{"path", path},
                         {"dataset_index", it.dataset_index},
                         {"label", it.image.label},
                         {"predicted", it.predicted},
                         {"true_class_confidence", it.true_class_confidence}});
    }
    m["items"] = items;
    write_text_file(manifest_path, m.dump(2) + "\n");
}

HardExampleSet load_hard_set(const std::string& manifest_path) {
    json m = json::parse(read_text_file(manifest_path));
    HardExampleSet set;
    set.source_split = m.at("source_split").get<std::string>();
    set.criterion = mining_criterion_from_name(m.at("criterion").get<std::string>());
    set.confidence_threshold = m.at("confidence_threshold").get<double>();
    set.requested = m.at("requested").get<int>();
    if (m.contains("shortage_warning"))
        set.shortage_warning = m.at("shortage_warning").get<std::string>();
    for (const auto& ji : m.at("items")) {
        HardItem it;
        const std::string path = ji.at("path").get<std::string>();
        if (path.empty())
            throw IoError("load_hard_set: manifest item has no image path; "
                          "the set was saved without image export");
        it.image.pixels = read_png(path);
        it.image.label = ji.at("label").get<int>();
        it.dataset_index = ji.at("dataset_index").get<int>();
        it.predicted = ji.at("predicted").get<int>();
        it.true_class_confidence = ji.at("true_class_confidence").get<double>();
        set.items.push_back(std::move(it));
    }
    return set;
}

}  // namespace uapatch
