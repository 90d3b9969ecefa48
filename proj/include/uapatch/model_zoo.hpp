#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uapatch/rng.hpp"
#include "uapatch/tensor.hpp"

namespace uapatch {

struct LabeledImage {
    Tensor pixels;  // (3, H, W) in [0, 1]
    int label = 0;
};

enum class LayerType { Conv, MaxPool2, GlobalMaxPool, Dense };

struct LayerSpec {
    LayerType type = LayerType::Conv;
    int out_c = 0;   // conv / dense output width
    int ksize = 3;   // conv kernel
    int stride = 1;
    int pad = 1;
    bool relu = true;       // conv blocks end in ReLU; dense does not
    std::string name;       // conv blocks are named and exposed as feature layers
};

struct ParamGrads {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;
};

// Gradient seeds for a backward pass. `logit_grad` seeds dL/d(logits);
// `layer_grad` seeds dL/d(output of named feature layer). Both may be set at
// once; contributions accumulate as the pass walks toward the input.
struct GradSeeds {
    std::vector<double> logit_grad;
    std::map<int, Tensor> layer_grad;  // layer index -> gradient at its output
};

// A small sequential CNN with explicit forward and reverse passes. Inference
// is deterministic (no stochastic layers), so identical inputs produce
// bitwise-identical outputs. Instances are immutable after training/loading
// and safe for concurrent read-only use.
class Network {
public:
    Network() = default;
    Network(std::string arch_id, int in_c, int in_h, int in_w, std::vector<LayerSpec> specs);

    void init_weights(Rng& rng);  // He-normal weights, zero bias

    struct Activations {
        std::vector<Tensor> out;  // one per layer, in order
    };

    Activations forward(const Tensor& x) const;
    std::vector<double> logits(const Tensor& x) const;
    std::vector<double> logits_from(const Activations& acts) const;

    // Continue the forward pass given a replacement output for layer `idx`.
    std::vector<double> logits_from_layer(int idx, const Tensor& activation) const;

    // Returns dL/d(input); accumulates parameter gradients when `pg` is given.
    Tensor backward(const Tensor& x, const Activations& acts, const GradSeeds& seeds,
                    ParamGrads* pg = nullptr) const;

    // Returns dL/d(output of layer `idx`) instead of walking all the way to
    // the input. Seeds below `idx` are ignored.
    Tensor backward_to_layer(const Tensor& x, const Activations& acts, const GradSeeds& seeds,
                             int idx) const;

    ParamGrads zero_param_grads() const;
    void apply_step(const std::vector<std::vector<double>>& wstep,
                    const std::vector<std::vector<double>>& bstep);

    int num_classes() const { return num_classes_; }
    int input_channels() const { return in_c_; }
    std::pair<int, int> input_size() const { return {in_h_, in_w_}; }
    const std::string& arch_id() const { return arch_id_; }

    const std::vector<std::string>& feature_layer_names() const { return feature_names_; }
    int layer_index(const std::string& name) const;  // throws LookupError
    std::pair<int, int> layer_spatial_size(const std::string& name) const;

    std::size_t num_layers() const { return layers_.size(); }
    const LayerSpec& spec(std::size_t i) const { return layers_[i].spec; }
    std::vector<double>& layer_weights(std::size_t i) { return layers_[i].weight; }
    std::vector<double>& layer_bias(std::size_t i) { return layers_[i].bias; }
    const std::vector<double>& layer_weights(std::size_t i) const { return layers_[i].weight; }

    void serialize(std::string& out) const;
    static Network deserialize(const std::string& bytes);

private:
    struct Layer {
        LayerSpec spec;
        int in_c = 0, in_h = 0, in_w = 0;
        int out_c = 0, out_h = 0, out_w = 0;
        std::vector<double> weight;
        std::vector<double> bias;
    };

    void resolve_shapes();
    Tensor forward_layer(std::size_t i, const Tensor& in) const;
    Tensor backward_layer(std::size_t i, const Tensor& in, const Tensor& out, const Tensor& gout,
                          ParamGrads* pg) const;
    Tensor backward_core(const Tensor& x, const Activations& acts, const GradSeeds& seeds,
                         int stop_idx, ParamGrads* pg) const;

    std::string arch_id_;
    int in_c_ = 0, in_h_ = 0, in_w_ = 0;
    int num_classes_ = 0;
    std::vector<Layer> layers_;
    std::vector<std::string> feature_names_;
};

std::vector<double> softmax(const std::vector<double>& logits);

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

struct TrainOptions {
    int epochs = 12;
    int batch_size = 32;
    double lr = 0.01;
    double weight_decay = 1e-4;
};

// The classifier abstraction consumed by every other module: logits,
// probabilities, named feature maps, and input gradients over a frozen net.
class Classifier {
public:
    Classifier() = default;
    Classifier(Network net, std::vector<std::string> label_names);

    static Classifier make_toy(const std::string& arch, int num_classes, int input_hw,
                               std::uint64_t seed);

    int num_classes() const { return net_.num_classes(); }
    std::pair<int, int> input_size() const { return net_.input_size(); }
    const std::vector<std::string>& feature_layers() const { return net_.feature_layer_names(); }
    const std::vector<std::string>& label_names() const { return label_names_; }
    const std::string& model_id() const { return model_id_; }
    void set_model_id(std::string id) { model_id_ = std::move(id); }

    // Validates shape and finiteness; returns argmax label (lowest index on
    // ties) plus the full probability vector.
    Prediction predict(const Tensor& image) const;
    std::vector<double> logits(const Tensor& image) const;
    Tensor feature_maps(const Tensor& image, const std::string& layer_name) const;

    const Network& net() const { return net_; }
    Network& mutable_net() { return net_; }

    // Resize to the model's input size and clamp to [0, 1].
    Tensor preprocess(const Tensor& image) const;

    // Supervised training with cross-entropy + Adam. Returns final train loss.
    double train(const std::vector<LabeledImage>& data, const TrainOptions& opts, Rng& rng);
    double top1_accuracy(const std::vector<LabeledImage>& data) const;

    const std::string& training_config_hash() const { return training_config_hash_; }
    void set_training_config_hash(std::string h) { training_config_hash_ = std::move(h); }

    void save_checkpoint(const std::string& path) const;
    static Classifier load_checkpoint(const std::string& path);

private:
    void validate_input(const Tensor& image) const;

    Network net_;
    std::vector<std::string> label_names_;
    std::string model_id_ = "model";
    std::string training_config_hash_;
};

// Adam state for an arbitrary flat parameter vector (pixels or weights).
class AdamState {
public:
    AdamState(std::size_t n, double lr, double weight_decay = 0.0, double beta1 = 0.9,
              double beta2 = 0.999, double eps = 1e-8);

    // In-place update of `params` given gradient `grad` (same length).
    void step(std::vector<double>& params, const std::vector<double>& grad);

private:
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace uapatch
