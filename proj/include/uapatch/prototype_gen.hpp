#pragma once

#include <string>
#include <vector>

#include "uapatch/model_zoo.hpp"

namespace uapatch {

// Multi-class hinge objective on the logits:
//   (1/C) * sum_{c != t} max(0, margin - S_t + S_c)^p,  p in {1, 2}.
// Zero iff class t clears every other class by at least `margin`. The sum has
// C-1 terms but is divided by C.
double margin_loss(const std::vector<double>& logits, int target, double margin, int p);
std::vector<double> margin_loss_grad(const std::vector<double>& logits, int target, double margin,
                                     int p);

// A synthesized class-representative image: maximizes the class margin under
// the RGB range constraint, and re-verifies its own classification at
// creation time.
struct Prototype {
    Tensor pixels;
    int target_class = 0;
    double final_margin_loss = 0.0;
    int steps_used = 0;
    std::uint64_t seed = 0;
};

struct PrototypeOptions {
    double margin = 10.0;
    int p = 1;
    int steps = 500;
    double lr = 0.01;
    double weight_decay = 0.0;
    int retry_budget = 5;  // extra seeds tried per rejected prototype
};

// Descends margin_loss from seeded uniform noise in [0.4, 0.6], clamping to
// [0, 1] per step and stopping early at exact zero loss. Throws
// OptimizationError when the result does not classify as `target`.
Prototype generate_prototype(const Classifier& handle, int target,
                             const PrototypeOptions& opts, std::uint64_t seed);

struct PrototypeSet {
    std::vector<Prototype> items;
    std::vector<std::string> shortage;  // per-class shortage notes, if any
};

// m prototypes per class with distinct derived seeds; rejected slots retry
// with fresh seeds up to the budget. A class with zero successes raises.
PrototypeSet generate_prototype_set(const Classifier& handle, int per_class,
                                    const PrototypeOptions& opts, std::uint64_t seed);

void save_prototype_set(const PrototypeSet& set, const std::string& dir,
                        const std::string& config_fingerprint);
PrototypeSet load_prototype_set(const std::string& dir);

}  // namespace uapatch
