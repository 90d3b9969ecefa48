#include "uapatch/prior_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "uapatch/errors.hpp"
#include "uapatch/png_io.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using json = nlohmann::json;

Eigen::MatrixXd gram_matrix(const Tensor& features) {
    if (features.empty()) throw ShapeError("gram_matrix: empty features");
    if (!all_finite(features)) throw ValidationError("gram_matrix: non-finite activations");
    const int w = features.c;
    const int positions = features.h * features.w;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> F(
        features.v.data(), w, positions);
    Eigen::MatrixXd g = F * F.transpose();
    // Force exact symmetry against accumulation-order noise.
    for (int i = 0; i < w; ++i)
        for (int j = i + 1; j < w; ++j) {
            const double m = 0.5 * (g(i, j) + g(j, i));
            g(i, j) = m;
            g(j, i) = m;
        }
    return g;
}

namespace {

double gram_sq_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).squaredNorm();
}

std::vector<Eigen::MatrixXd> grams_for(const Classifier& handle, const Tensor& image,
                                       const std::vector<int>& layer_indices) {
    auto acts = handle.net().forward(image);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(layer_indices.size());
    for (int idx : layer_indices) out.push_back(gram_matrix(acts.out[idx]));
    return out;
}

std::vector<int> resolve_layers(const Classifier& handle, const std::vector<std::string>& layers) {
    if (layers.empty()) throw ValidationError("style layers list is empty");
    std::vector<int> idx;
    idx.reserve(layers.size());
    for (const auto& name : layers) idx.push_back(handle.net().layer_index(name));
    return idx;
}

}  // namespace

std::vector<std::string> default_gram_layers(const Classifier& handle) {
    const auto& names = handle.feature_layers();
    if (names.size() >= 4) return {names[1], names[2]};
    if (names.size() >= 2) return {names[0], names[1]};
    if (names.size() == 1) return {names[0]};
    throw ValidationError("model exposes no feature layers for style matching");
}

std::string default_attention_layer(const Classifier& handle) {
    const auto& names = handle.feature_layers();
    if (names.empty()) throw ValidationError("model exposes no feature layers for attention");
    return names.back();
}

double style_loss(const Tensor& x_star, const std::vector<Tensor>& hard_batch,
                  const Classifier& handle, const std::vector<std::string>& layers) {
    if (hard_batch.empty()) throw ValidationError("style_loss: empty batch");
    const std::vector<int> idx = resolve_layers(handle, layers);
    const auto gx = grams_for(handle, x_star, idx);
    double total = 0.0;
    for (const Tensor& hb : hard_batch) {
        const auto gh = grams_for(handle, hb, idx);
        for (std::size_t l = 0; l < idx.size(); ++l) total += gram_sq_distance(gx[l], gh[l]);
    }
    return total / static_cast<double>(hard_batch.size());
}

UncertaintyMode uncertainty_mode_from_name(const std::string& s) {
    if (s == "mean_log_confidence") return UncertaintyMode::MeanLogConfidence;
    if (s == "neg_entropy") return UncertaintyMode::NegEntropy;
    throw ValidationError("unknown uncertainty mode '" + s + "'");
}

const char* uncertainty_mode_name(UncertaintyMode m) {
    return m == UncertaintyMode::MeanLogConfidence ? "mean_log_confidence" : "neg_entropy";
}

double uncertainty_loss_from_probs(const std::vector<double>& probs, UncertaintyMode mode) {
    const double C = static_cast<double>(probs.size());
    double loss = 0.0;
    for (double p : probs) {
        const double lp = std::log(std::max(p, kProbFloor));
        loss += mode == UncertaintyMode::MeanLogConfidence ? lp / C : p * lp;
    }
    return loss;
}

std::vector<double> uncertainty_logit_grad(const std::vector<double>& probs,
                                           UncertaintyMode mode) {
    const std::size_t C = probs.size();
    std::vector<double> g(C, 0.0);
    if (mode == UncertaintyMode::MeanLogConfidence) {
        // d/dz_j of (1/C) sum_i log p_i, with floored terms contributing zero.
        double active = 0.0;
        for (double p : probs) active += p >= kProbFloor ? 1.0 : 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double mj = probs[j] >= kProbFloor ? 1.0 : 0.0;
            g[j] = (mj - probs[j] * active) / static_cast<double>(C);
        }
    } else {
        // d/dz_j of sum_i p_i log p_i through the softmax Jacobian.
        double inner = 0.0;
        for (double p : probs) {
            const double lp = std::log(std::max(p, kProbFloor));
            const double m = p >= kProbFloor ? 1.0 : 0.0;
            inner += p * (lp + m);
        }
        for (std::size_t j = 0; j < C; ++j) {
            const double lp = std::log(std::max(probs[j], kProbFloor));
            const double m = probs[j] >= kProbFloor ? 1.0 : 0.0;
            g[j] = probs[j] * ((lp + m) - inner);
        }
    }
    return g;
}

double uncertainty_loss(const Tensor& x_star, const Classifier& handle, UncertaintyMode mode) {
    return uncertainty_loss_from_probs(handle.predict(x_star).probabilities, mode);
}

namespace {

struct FullSetLosses {
    double style = 0.0;
    double uncertainty = 0.0;
};

FullSetLosses full_set_losses(const Tensor& x, const Classifier& handle,
                              const std::vector<int>& layer_idx,
                              const std::vector<std::vector<Eigen::MatrixXd>>& hard_grams,
                              UncertaintyMode mode) {
    auto acts = handle.net().forward(x);
    std::vector<Eigen::MatrixXd> gx;
    gx.reserve(layer_idx.size());
    for (int idx : layer_idx) gx.push_back(gram_matrix(acts.out[idx]));
    double style = 0.0;
    for (const auto& gh : hard_grams)
        for (std::size_t l = 0; l < layer_idx.size(); ++l) style += gram_sq_distance(gx[l], gh[l]);
    style /= static_cast<double>(hard_grams.size());
    const double unc =
        uncertainty_loss_from_probs(softmax(handle.net().logits_from(acts)), mode);
    return {style, unc};
}

json trace_to_json(const std::vector<FusionTraceRow>& trace) {
    json rows = json::array();
    for (const auto& r : trace)
        rows.push_back({{"epoch", r.epoch},
                        {"style", r.style},
                        {"uncertainty", r.uncertainty},
                        {"fused", r.fused}});
    return rows;
}

}  // namespace

FusedExample fuse_prior(const HardExampleSet& hard_set, const Classifier& handle,
                        const FuseOptions& opts) {
    if (hard_set.items.empty()) throw ValidationError("fuse_prior: hard set is empty");
    if (opts.epochs < 0 || opts.batch_size <= 0)
        throw ValidationError("fuse_prior: bad epochs/batch_size");

    const std::vector<std::string> layer_names =
        opts.gram_layers.empty() ? default_gram_layers(handle) : opts.gram_layers;
    const std::vector<int> layer_idx = resolve_layers(handle, layer_names);

    Rng rng(opts.seed);
    const int n = static_cast<int>(hard_set.items.size());
    const int init_idx = rng.uniform_int(0, n - 1);

    FusedExample fused;
    fused.pixels = hard_set.items[init_idx].image.pixels;
    fused.init_source = "hard_" + std::to_string(hard_set.items[init_idx].dataset_index);

    // Hard-example Grams are fixed for the whole run; compute them once.
    std::vector<std::vector<Eigen::MatrixXd>> hard_grams;
    hard_grams.reserve(n);
    for (const auto& it : hard_set.items)
        hard_grams.push_back(grams_for(handle, it.image.pixels, layer_idx));

    auto record = [&](int epoch) {
        FullSetLosses fl = full_set_losses(fused.pixels, handle, layer_idx, hard_grams, opts.mode);
        fused.loss_trace.push_back(
            {epoch, fl.style, fl.uncertainty, fl.style + opts.lambda * fl.uncertainty});
    };
    record(0);

    AdamState adam(fused.pixels.size(), opts.lr, opts.weight_decay);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += opts.batch_size) {
            const int end = std::min(n, start + opts.batch_size);
            const int bsz = end - start;

            auto acts = handle.net().forward(fused.pixels);

            // Style gradient: seed each Gram layer with 2 * (G(x) - mean G_hard).
            GradSeeds seeds;
            for (std::size_t l = 0; l < layer_idx.size(); ++l) {
                const Tensor& feats = acts.out[layer_idx[l]];
                const int w = feats.c;
                const int positions = feats.h * feats.w;
                Eigen::MatrixXd gx = gram_matrix(feats);
                Eigen::MatrixXd target = Eigen::MatrixXd::Zero(w, w);
                for (int bi = start; bi < end; ++bi) target += hard_grams[order[bi]][l];
                target /= static_cast<double>(bsz);
                Eigen::MatrixXd d = 2.0 * (gx - target);
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>
                    F(feats.v.data(), w, positions);
                Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dF =
                    (d + d.transpose()) * F;
                Tensor seed(feats.c, feats.h, feats.w);
                std::copy(dF.data(), dF.data() + dF.size(), seed.v.begin());
                seeds.layer_grad.emplace(layer_idx[l], std::move(seed));
            }

            if (opts.lambda != 0.0) {
                std::vector<double> probs = softmax(handle.net().logits_from(acts));
                std::vector<double> lg = uncertainty_logit_grad(probs, opts.mode);
                for (double& g : lg) g *= opts.lambda;
                seeds.logit_grad = std::move(lg);
            }

            Tensor grad = handle.net().backward(fused.pixels, acts, seeds);
            if (!all_finite(grad))
                throw OptimizationError("fuse_prior: non-finite gradient",
                                        trace_to_json(fused.loss_trace).dump());
            adam.step(fused.pixels.v, grad.v);
            clamp01(fused.pixels);
        }
        record(epoch);
        if (!std::isfinite(fused.loss_trace.back().fused))
            throw OptimizationError("fuse_prior: loss diverged",
                                    trace_to_json(fused.loss_trace).dump());
    }
    return fused;
}

void save_fused_example(const FusedExample& fused, const std::string& png_path,
                        const FuseOptions& opts, const std::string& config_fingerprint) {
    write_png(png_path, fused.pixels);
    json side;
    side["init_source"] = fused.init_source;
    side["lambda"] = opts.lambda;
    side["mode"] = uncertainty_mode_name(opts.mode);
    side["seed"] = opts.seed;
    side["loss_trace"] = trace_to_json(fused.loss_trace);
    side["config_fingerprint"] = config_fingerprint;
    side["created"] = iso8601_now();
    write_text_file(png_path + ".json", side.dump(2) + "\n");
}

FusedExample load_fused_example(const std::string& png_path) {
    FusedExample fused;
    fused.pixels = read_png(png_path);
    json side = json::parse(read_text_file(png_path + ".json"));
    fused.init_source = side.at("init_source").get<std::string>();
    for (const auto& r : side.at("loss_trace"))
        fused.loss_trace.push_back({r.at("epoch").get<int>(), r.at("style").get<double>(),
                                    r.at("uncertainty").get<double>(), r.at("fused").get<double>()});
    return fused;
}

AttentionMap attention_weights(const Classifier& handle, const Tensor& image,
                               const std::string& layer_name, int target_label) {
    if (target_label < 0 || target_label >= handle.num_classes())
        throw ValidationError("attention_weights: target label out of range");
    const int idx = handle.net().layer_index(layer_name);
    auto acts = handle.net().forward(image);
    const Tensor& feats = acts.out[idx];

    // Gradient of the target logit (pre-softmax) at this layer's output.
    GradSeeds seeds;
    seeds.logit_grad.assign(handle.num_classes(), 0.0);
    seeds.logit_grad[target_label] = 1.0;
    Tensor dF = handle.net().backward_to_layer(image, acts, seeds, idx);

    const int maps = feats.c;
    const int u = feats.h, v = feats.w;
    AttentionMap out;
    out.weights = Tensor(1, u, v, 0.0);
    out.layer_name = layer_name;
    out.source_label = target_label;
    for (int k = 0; k < maps; ++k) {
        double mn = feats.at(k, 0, 0), mx = feats.at(k, 0, 0);
        for (int y = 0; y < u; ++y)
            for (int x = 0; x < v; ++x) {
                mn = std::min(mn, feats.at(k, y, x));
                mx = std::max(mx, feats.at(k, y, x));
            }
        const double scale = mx - mn;
        if (scale <= 0.0) continue;  // constant map: Z = 0 contributes nothing
        for (int y = 0; y < u; ++y)
            for (int x = 0; x < v; ++x) {
                const double z = (feats.at(k, y, x) - mn) / scale;
                // dy/dZ = dy/dF * scale since F = mn + Z * scale.
                out.weights.at(0, y, x) += dF.at(k, y, x) * scale * z;
            }
    }
    return out;
}

CropResult crop_prior(const FusedExample& fused, const AttentionMap& attention,
                      std::pair<int, int> patch_hw, double area_budget) {
    const auto [ph, pw] = patch_hw;
    const int H = fused.pixels.h, W = fused.pixels.w;
    if (ph <= 0 || pw <= 0 || ph > H || pw > W)
        throw ShapeError("crop_prior: patch size does not fit in image");

    Tensor up = bilinear_resize(attention.weights, H, W);

    // Direct window sums in a fixed order, so exact ties stay exact and the
    // smallest (top, left) wins.
    int best_top = 0, best_left = 0;
    double best_sum = -std::numeric_limits<double>::infinity();
    for (int top = 0; top + ph <= H; ++top)
        for (int left = 0; left + pw <= W; ++left) {
            double sum = 0.0;
            for (int y = 0; y < ph; ++y)
                for (int x = 0; x < pw; ++x) sum += up.at(0, top + y, left + x);
            if (sum > best_sum) {
                best_sum = sum;
                best_top = top;
                best_left = left;
            }
        }

    Tensor crop(3, ph, pw);
    for (int ci = 0; ci < 3; ++ci)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                crop.at(ci, y, x) = fused.pixels.at(ci, best_top + y, best_left + x);

    CropResult res;
    res.patch = make_patch(std::move(crop), "fused_prior", Provenance::FusedPrior, {H, W},
                           area_budget);
    res.top = best_top;
    res.left = best_left;
    return res;
}

}  // namespace uapatch
