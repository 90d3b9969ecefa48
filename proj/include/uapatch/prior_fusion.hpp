#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "uapatch/hard_mining.hpp"
#include "uapatch/model_zoo.hpp"
#include "uapatch/patch_core.hpp"

namespace uapatch {

// Channel-by-channel inner products of a layer's activations over flattened
// spatial positions: G_ij = sum_k F_ik * F_jk. Symmetric positive
// semidefinite; encodes the texture statistics the fusion stage matches.
Eigen::MatrixXd gram_matrix(const Tensor& features);

// Mean over the batch of squared Frobenius distances between Gram matrices,
// summed over the configured layers. Zero iff the Grams agree on all layers.
double style_loss(const Tensor& x_star, const std::vector<Tensor>& hard_batch,
                  const Classifier& handle, const std::vector<std::string>& layers);

enum class UncertaintyMode {
    MeanLogConfidence,  // (1/C) * sum_i log p_i
    NegEntropy          // sum_i p_i log p_i (minimizing this maximizes entropy)
};

UncertaintyMode uncertainty_mode_from_name(const std::string& s);
const char* uncertainty_mode_name(UncertaintyMode m);

// Class-uncertainty objective on the model's softmax output. Logs are floored
// at kProbFloor so the value stays finite for saturated predictions.
inline constexpr double kProbFloor = 1e-12;

double uncertainty_loss(const Tensor& x_star, const Classifier& handle, UncertaintyMode mode);
double uncertainty_loss_from_probs(const std::vector<double>& probs, UncertaintyMode mode);
// d(loss)/d(logits) for the same objective.
std::vector<double> uncertainty_logit_grad(const std::vector<double>& probs, UncertaintyMode mode);

struct FusionTraceRow {
    int epoch = 0;
    double style = 0.0;
    double uncertainty = 0.0;
    double fused = 0.0;  // style + lambda * uncertainty
};

struct FusedExample {
    Tensor pixels;
    std::string init_source;  // id of the seeding hard example
    std::vector<FusionTraceRow> loss_trace;
};

struct FuseOptions {
    double lambda = 1.0;
    int epochs = 50;
    int batch_size = 16;
    double lr = 0.01;
    double weight_decay = 0.0;
    UncertaintyMode mode = UncertaintyMode::NegEntropy;
    std::vector<std::string> gram_layers;  // empty = the two mid-depth conv layers
    std::uint64_t seed = 1;
};

// Stage 1: initialize from a seeded random hard example and descend
// style + lambda * uncertainty over minibatches of the hard set, clamping to
// [0, 1] after every step. The trace records full-set losses per epoch
// (epoch 0 is the initialization).
FusedExample fuse_prior(const HardExampleSet& hard_set, const Classifier& handle,
                        const FuseOptions& opts);

void save_fused_example(const FusedExample& fused, const std::string& png_path,
                        const FuseOptions& opts, const std::string& config_fingerprint);
FusedExample load_fused_example(const std::string& png_path);

// Gradient-weighted activation attention over a named layer: each position's
// weight is sum_k d(target logit)/dZ_k(i,j) * Z_k(i,j) with Z the per-map
// min-max normalized feature maps.
struct AttentionMap {
    Tensor weights;  // (1, u, v)
    std::string layer_name;
    int source_label = 0;
};

AttentionMap attention_weights(const Classifier& handle, const Tensor& image,
                               const std::string& layer_name, int target_label);

struct CropResult {
    Patch patch;
    int top = 0;
    int left = 0;
};

// Upsample attention to image resolution, slide a patch-size window, and cut
// the pixel crop under the maximal attention sum (ties: smallest (top, left)).
CropResult crop_prior(const FusedExample& fused, const AttentionMap& attention,
                      std::pair<int, int> patch_hw, double area_budget = kDefaultAreaBudget);

std::vector<std::string> default_gram_layers(const Classifier& handle);
std::string default_attention_layer(const Classifier& handle);

}  // namespace uapatch
