#include "uapatch/prototype_gen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "uapatch/errors.hpp"
#include "uapatch/png_io.hpp"
#include "uapatch/rng.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using json = nlohmann::json;

namespace {

void validate_margin_args(std::size_t C, int target, double margin, int p) {
    if (C < 2) throw ValidationError("margin_loss: need at least 2 classes");
    if (target < 0 || target >= static_cast<int>(C))
        throw ValidationError("margin_loss: target class out of range");
    if (!(margin > 0.0)) throw ValidationError("margin_loss: margin must be positive");
    if (p != 1 && p != 2) throw ValidationError("margin_loss: p must be 1 or 2");
}

}  // namespace

double margin_loss(const std::vector<double>& logits, int target, double margin, int p) {
    validate_margin_args(logits.size(), target, margin, p);
    const double st = logits[target];
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (static_cast<int>(c) == target) continue;
        const double h = margin - st + logits[c];
        if (h > 0.0) sum += p == 1 ? h : h * h;
    }
    return sum / static_cast<double>(logits.size());
}

std::vector<double> margin_loss_grad(const std::vector<double>& logits, int target, double margin,
                                     int p) {
    validate_margin_args(logits.size(), target, margin, p);
    const double st = logits[target];
    const double invC = 1.0 / static_cast<double>(logits.size());
    std::vector<double> g(logits.size(), 0.0);
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (static_cast<int>(c) == target) continue;
        const double h = margin - st + logits[c];
        if (h > 0.0) {
            const double d = (p == 1 ? 1.0 : 2.0 * h) * invC;
            g[c] += d;
            g[target] -= d;
        }
    }
    return g;
}

Prototype generate_prototype(const Classifier& handle, int target,
                             const PrototypeOptions& opts, std::uint64_t seed) {
    if (target < 0 || target >= handle.num_classes())
        throw ValidationError("generate_prototype: target class out of range");
    if (opts.steps <= 0) throw ValidationError("generate_prototype: steps must be positive");

    auto [H, W] = handle.input_size();
    Rng rng(seed);
    Prototype proto;
    proto.target_class = target;
    proto.seed = seed;
    proto.pixels = Tensor(3, H, W);
    // Mid-gray noise keeps the clamp inactive at step 0.
    for (double& v : proto.pixels.v) v = rng.uniform(0.4, 0.6);

    AdamState adam(proto.pixels.size(), opts.lr, opts.weight_decay);
    double loss = 0.0;
    int steps = 0;
    for (; steps < opts.steps; ++steps) {
        auto acts = handle.net().forward(proto.pixels);
        std::vector<double> z = handle.net().logits_from(acts);
        loss = margin_loss(z, target, opts.margin, opts.p);
        if (loss == 0.0) break;
        GradSeeds seeds;
        seeds.logit_grad = margin_loss_grad(z, target, opts.margin, opts.p);
        Tensor grad = handle.net().backward(proto.pixels, acts, seeds);
        adam.step(proto.pixels.v, grad.v);
        clamp01(proto.pixels);
    }
    proto.final_margin_loss =
        margin_loss(handle.logits(proto.pixels), target, opts.margin, opts.p);
    proto.steps_used = steps;

    const Prediction pred = handle.predict(proto.pixels);
    if (pred.label != target) {
        json trace = {{"target", target},
                      {"seed", seed},
                      {"final_margin_loss", proto.final_margin_loss},
                      {"predicted", pred.label}};
        throw OptimizationError("generate_prototype: class " + std::to_string(target) +
                                    " prototype rejected (predicted " +
                                    std::to_string(pred.label) + " after " +
                                    std::to_string(steps) + " steps)",
                                trace.dump());
    }
    return proto;
}

PrototypeSet generate_prototype_set(const Classifier& handle, int per_class,
                                    const PrototypeOptions& opts, std::uint64_t seed) {
    if (per_class < 1) throw ValidationError("generate_prototype_set: per_class must be >= 1");
    PrototypeSet set;
    for (int cls = 0; cls < handle.num_classes(); ++cls) {
        int produced = 0;
        int rejected = 0;
        for (int inst = 0; inst < per_class; ++inst) {
            // Distinct derived seed per (class, instance, attempt).
            bool ok = false;
            for (int attempt = 0; attempt <= opts.retry_budget && !ok; ++attempt) {
                const std::uint64_t s =
                    seed ^ fnv1a64("proto/" + std::to_string(cls) + "/" + std::to_string(inst) +
                                   "/" + std::to_string(attempt));
                try {
                    set.items.push_back(generate_prototype(handle, cls, opts, s));
                    ok = true;
                    ++produced;
                } catch (const OptimizationError&) {
                    ++rejected;
                }
            }
        }
        if (produced == 0)
            throw OptimizationError("generate_prototype_set: no prototype converged for class " +
                                        std::to_string(cls),
                                    "{}");
        if (produced < per_class)
            set.shortage.push_back("class " + std::to_string(cls) + ": " +
                                   std::to_string(produced) + "/" + std::to_string(per_class) +
                                   " after " + std::to_string(rejected) + " rejections");
    }
    return set;
}

void save_prototype_set(const PrototypeSet& set, const std::string& dir,
                        const std::string& config_fingerprint) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["config_fingerprint"] = config_fingerprint;
    manifest["shortage"] = set.shortage;
    json items = json::array();
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        const Prototype& p = set.items[i];
        const std::string name =
            "proto_c" + std::to_string(p.target_class) + "_" + std::to_string(i) + ".png";
        write_png(dir + "/" + name, p.pixels);
        items.push_back({{"file", name},
                         {"class", p.target_class},
                         {"seed", p.seed},
                         {"final_margin_loss", p.final_margin_loss},
                         {"steps_used", p.steps_used}});
    }
    manifest["items"] = items;
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

PrototypeSet load_prototype_set(const std::string& dir) {
    json manifest = json::parse(read_text_file(dir + "/manifest.json"));
    PrototypeSet set;
    set.shortage = manifest.at("shortage").get<std::vector<std::string>>();
    for (const auto& ji : manifest.at("items")) {
        Prototype p;
        p.pixels = read_png(dir + "/" + ji.at("file").get<std::string>());
        p.target_class = ji.at("class").get<int>();
        p.seed = ji.at("seed").get<std::uint64_t>();
        p.final_margin_loss = ji.at("final_margin_loss").get<double>();
        p.steps_used = ji.at("steps_used").get<int>();
        set.items.push_back(std::move(p));
    }
    return set;
}

}  // namespace uapatch
