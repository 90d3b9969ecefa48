#include "uapatch/model_zoo.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "uapatch/errors.hpp"
#include "uapatch/util.hpp"

namespace uapatch {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using json = nlohmann::json;

namespace {

void im2col(const Tensor& x, int k, int stride, int pad, int out_h, int out_w,
            std::vector<double>& col) {
    const int ckk = x.c * k * k;
    const int positions = out_h * out_w;
    col.assign(static_cast<std::size_t>(ckk) * positions, 0.0);
    for (int ci = 0; ci < x.c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (ci * k + ky) * k + kx;
                double* dst = col.data() + static_cast<std::size_t>(row) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= x.w) continue;
                        dst[oy * out_w + ox] = x.at(ci, iy, ix);
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<double>& col, int c, int h, int w, int k, int stride, int pad,
                int out_h, int out_w, Tensor& grad) {
    const int positions = out_h * out_w;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (ci * k + ky) * k + kx;
                const double* src = col.data() + static_cast<std::size_t>(row) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        grad.at(ci, iy, ix) += src[oy * out_w + ox];
                    }
                }
            }
        }
    }
}

const char* layer_type_name(LayerType t) {
    switch (t) {
        case LayerType::Conv: return "conv";
        case LayerType::MaxPool2: return "maxpool2";
        case LayerType::GlobalMaxPool: return "globalmax";
        case LayerType::Dense: return "dense";
    }
    return "?";
}

LayerType layer_type_from_name(const std::string& s) {
    if (s == "conv") return LayerType::Conv;
    if (s == "maxpool2") return LayerType::MaxPool2;
    if (s == "globalmax") return LayerType::GlobalMaxPool;
    if (s == "dense") return LayerType::Dense;
    throw CheckpointError("unknown layer type '" + s + "'", "layers.type");
}

}  // namespace

Network::Network(std::string arch_id, int in_c, int in_h, int in_w, std::vector<LayerSpec> specs)
    : arch_id_(std::move(arch_id)), in_c_(in_c), in_h_(in_h), in_w_(in_w) {
    if (specs.empty() || specs.back().type != LayerType::Dense)
        throw ValidationError("Network: layer stack must end in a dense classifier head");
    layers_.reserve(specs.size());
    for (auto& s : specs) {
        Layer l;
        l.spec = s;
        layers_.push_back(std::move(l));
    }
    resolve_shapes();
    num_classes_ = layers_.back().out_c;
    for (const auto& l : layers_) {
        if (l.spec.type == LayerType::Conv && !l.spec.name.empty())
            feature_names_.push_back(l.spec.name);
    }
}

void Network::resolve_shapes() {
    int c = in_c_, h = in_h_, w = in_w_;
    for (auto& l : layers_) {
        l.in_c = c;
        l.in_h = h;
        l.in_w = w;
        switch (l.spec.type) {
            case LayerType::Conv: {
                l.out_c = l.spec.out_c;
                l.out_h = (h + 2 * l.spec.pad - l.spec.ksize) / l.spec.stride + 1;
                l.out_w = (w + 2 * l.spec.pad - l.spec.ksize) / l.spec.stride + 1;
                if (l.out_h <= 0 || l.out_w <= 0)
                    throw ValidationError("Network: conv output collapses to zero size");
                l.weight.assign(static_cast<std::size_t>(l.out_c) * c * l.spec.ksize * l.spec.ksize,
                                0.0);
                l.bias.assign(l.out_c, 0.0);
                break;
            }
            case LayerType::MaxPool2:
                l.out_c = c;
                l.out_h = h / 2;
                l.out_w = w / 2;
                if (l.out_h <= 0 || l.out_w <= 0)
                    throw ValidationError("Network: pooled output collapses to zero size");
                break;
            case LayerType::GlobalMaxPool:
                l.out_c = c;
                l.out_h = 1;
                l.out_w = 1;
                break;
            case LayerType::Dense: {
                const int n = c * h * w;
                l.out_c = l.spec.out_c;
                l.out_h = 1;
                l.out_w = 1;
                l.weight.assign(static_cast<std::size_t>(l.out_c) * n, 0.0);
                l.bias.assign(l.out_c, 0.0);
                break;
            }
        }
        c = l.out_c;
        h = l.out_h;
        w = l.out_w;
    }
}

void Network::init_weights(Rng& rng) {
    for (auto& l : layers_) {
        if (l.weight.empty()) continue;
        const int fan_in = l.spec.type == LayerType::Conv ? l.in_c * l.spec.ksize * l.spec.ksize
                                                          : l.in_c * l.in_h * l.in_w;
        const double stddev = std::sqrt(2.0 / fan_in);
        for (double& wv : l.weight) wv = rng.normal(0.0, stddev);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

Tensor Network::forward_layer(std::size_t i, const Tensor& in) const {
    const Layer& l = layers_[i];
    switch (l.spec.type) {
        case LayerType::Conv: {
            Tensor out(l.out_c, l.out_h, l.out_w);
            const int positions = l.out_h * l.out_w;
            const int ckk = l.in_c * l.spec.ksize * l.spec.ksize;
            std::vector<double> col;
            im2col(in, l.spec.ksize, l.spec.stride, l.spec.pad, l.out_h, l.out_w, col);
            CMapRM W(l.weight.data(), l.out_c, ckk);
            CMapRM C(col.data(), ckk, positions);
            MapRM Y(out.v.data(), l.out_c, positions);
            Y.noalias() = W * C;
            for (int oc = 0; oc < l.out_c; ++oc) Y.row(oc).array() += l.bias[oc];
            if (l.spec.relu)
                for (double& v : out.v) v = v > 0.0 ? v : 0.0;
            return out;
        }
        case LayerType::MaxPool2: {
            Tensor out(l.out_c, l.out_h, l.out_w);
            for (int ci = 0; ci < l.out_c; ++ci)
                for (int oy = 0; oy < l.out_h; ++oy)
                    for (int ox = 0; ox < l.out_w; ++ox) {
                        double m = in.at(ci, 2 * oy, 2 * ox);
                        m = std::max(m, in.at(ci, 2 * oy, 2 * ox + 1));
                        m = std::max(m, in.at(ci, 2 * oy + 1, 2 * ox));
                        m = std::max(m, in.at(ci, 2 * oy + 1, 2 * ox + 1));
                        out.at(ci, oy, ox) = m;
                    }
            return out;
        }
        case LayerType::GlobalMaxPool: {
            Tensor out(l.out_c, 1, 1);
            const int hw = l.in_h * l.in_w;
            for (int ci = 0; ci < l.out_c; ++ci) {
                const double* p = in.v.data() + static_cast<std::size_t>(ci) * hw;
                double m = p[0];
                for (int j = 1; j < hw; ++j) m = std::max(m, p[j]);
                out.at(ci, 0, 0) = m;
            }
            return out;
        }
        case LayerType::Dense: {
            const int n = l.in_c * l.in_h * l.in_w;
            Tensor out(l.out_c, 1, 1);
            CMapRM W(l.weight.data(), l.out_c, n);
            Eigen::Map<const Eigen::VectorXd> xin(in.v.data(), n);
            Eigen::Map<Eigen::VectorXd> y(out.v.data(), l.out_c);
            y.noalias() = W * xin;
            for (int oc = 0; oc < l.out_c; ++oc) y[oc] += l.bias[oc];
            return out;
        }
    }
    throw Error("unreachable layer type");
}

Network::Activations Network::forward(const Tensor& x) const {
    if (x.c != in_c_ || x.h != in_h_ || x.w != in_w_)
        throw ShapeError("Network::forward: input shape mismatch");
    Activations acts;
    acts.out.reserve(layers_.size());
    const Tensor* cur = &x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        acts.out.push_back(forward_layer(i, *cur));
        cur = &acts.out.back();
    }
    return acts;
}

std::vector<double> Network::logits_from(const Activations& acts) const {
    return acts.out.back().v;
}

std::vector<double> Network::logits(const Tensor& x) const { return forward(x).out.back().v; }

std::vector<double> Network::logits_from_layer(int idx, const Tensor& activation) const {
    if (idx < 0 || idx >= static_cast<int>(layers_.size()))
        throw LookupError("logits_from_layer: bad layer index");
    Tensor cur = activation;
    for (std::size_t i = idx + 1; i < layers_.size(); ++i) cur = forward_layer(i, cur);
    return cur.v;
}

Tensor Network::backward_layer(std::size_t i, const Tensor& in, const Tensor& out,
                               const Tensor& gout, ParamGrads* pg) const {
    const Layer& l = layers_[i];
    switch (l.spec.type) {
        case LayerType::Conv: {
            const int positions = l.out_h * l.out_w;
            const int ckk = l.in_c * l.spec.ksize * l.spec.ksize;
            // ReLU mask: gradient flows only where the block output is positive.
            std::vector<double> g = gout.v;
            if (l.spec.relu) {
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (out.v[j] <= 0.0) g[j] = 0.0;
            }
            CMapRM G(g.data(), l.out_c, positions);
            if (pg) {
                std::vector<double> col;
                im2col(in, l.spec.ksize, l.spec.stride, l.spec.pad, l.out_h, l.out_w, col);
                CMapRM C(col.data(), ckk, positions);
                MapRM dW(pg->weight[i].data(), l.out_c, ckk);
                dW.noalias() += G * C.transpose();
                for (int oc = 0; oc < l.out_c; ++oc)
                    pg->bias[i][oc] += G.row(oc).sum();
            }
            CMapRM W(l.weight.data(), l.out_c, ckk);
            std::vector<double> dcol(static_cast<std::size_t>(ckk) * positions);
            MapRM D(dcol.data(), ckk, positions);
            D.noalias() = W.transpose() * G;
            Tensor gin(l.in_c, l.in_h, l.in_w);
            col2im_add(dcol, l.in_c, l.in_h, l.in_w, l.spec.ksize, l.spec.stride, l.spec.pad,
                       l.out_h, l.out_w, gin);
            return gin;
        }
        case LayerType::MaxPool2: {
            Tensor gin(l.in_c, l.in_h, l.in_w);
            for (int ci = 0; ci < l.out_c; ++ci)
                for (int oy = 0; oy < l.out_h; ++oy)
                    for (int ox = 0; ox < l.out_w; ++ox) {
                        // First maximum in scan order receives the gradient.
                        int by = 2 * oy, bx = 2 * ox;
                        double best = in.at(ci, by, bx);
                        int wy = by, wx = bx;
                        if (in.at(ci, by, bx + 1) > best) { best = in.at(ci, by, bx + 1); wy = by; wx = bx + 1; }
                        if (in.at(ci, by + 1, bx) > best) { best = in.at(ci, by + 1, bx); wy = by + 1; wx = bx; }
                        if (in.at(ci, by + 1, bx + 1) > best) { wy = by + 1; wx = bx + 1; }
                        gin.at(ci, wy, wx) += gout.at(ci, oy, ox);
                    }
            return gin;
        }
        case LayerType::GlobalMaxPool: {
            Tensor gin(l.in_c, l.in_h, l.in_w);
            const int hw = l.in_h * l.in_w;
            for (int ci = 0; ci < l.out_c; ++ci) {
                const double* p = in.v.data() + static_cast<std::size_t>(ci) * hw;
                int arg = 0;
                for (int j = 1; j < hw; ++j)
                    if (p[j] > p[arg]) arg = j;
                gin.v[static_cast<std::size_t>(ci) * hw + arg] += gout.at(ci, 0, 0);
            }
            return gin;
        }
        case LayerType::Dense: {
            const int n = l.in_c * l.in_h * l.in_w;
            if (pg) {
                MapRM dW(pg->weight[i].data(), l.out_c, n);
                Eigen::Map<const Eigen::VectorXd> gy(gout.v.data(), l.out_c);
                Eigen::Map<const Eigen::VectorXd> xin(in.v.data(), n);
                dW.noalias() += gy * xin.transpose();
                for (int oc = 0; oc < l.out_c; ++oc) pg->bias[i][oc] += gout.v[oc];
            }
            Tensor gin(l.in_c, l.in_h, l.in_w);
            CMapRM W(l.weight.data(), l.out_c, n);
            Eigen::Map<const Eigen::VectorXd> gy(gout.v.data(), l.out_c);
            Eigen::Map<Eigen::VectorXd> gx(gin.v.data(), n);
            gx.noalias() = W.transpose() * gy;
            return gin;
        }
    }
    throw Error("unreachable layer type");
}

Tensor Network::backward_core(const Tensor& x, const Activations& acts, const GradSeeds& seeds,
                              int stop_idx, ParamGrads* pg) const {
    if (acts.out.size() != layers_.size())
        throw ShapeError("Network::backward: activation cache does not match network");
    if (stop_idx >= static_cast<int>(layers_.size()))
        throw LookupError("Network::backward: bad stop layer index");
    Tensor g(layers_.back().out_c, 1, 1);
    if (!seeds.logit_grad.empty()) {
        if (static_cast<int>(seeds.logit_grad.size()) != num_classes_)
            throw ShapeError("Network::backward: logit_grad length mismatch");
        for (int k = 0; k < num_classes_; ++k) g.v[k] = seeds.logit_grad[k];
    }
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
        auto it = seeds.layer_grad.find(i);
        if (it != seeds.layer_grad.end()) {
            if (!it->second.same_shape(acts.out[i]))
                throw ShapeError("Network::backward: layer gradient seed shape mismatch");
            for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += it->second.v[j];
        }
        if (i == stop_idx) return g;  // gradient at the output of layer stop_idx
        const Tensor& in = i == 0 ? x : acts.out[i - 1];
        g = backward_layer(static_cast<std::size_t>(i), in, acts.out[i], g, pg);
    }
    return g;
}

Tensor Network::backward(const Tensor& x, const Activations& acts, const GradSeeds& seeds,
                         ParamGrads* pg) const {
    return backward_core(x, acts, seeds, -1, pg);
}

Tensor Network::backward_to_layer(const Tensor& x, const Activations& acts,
                                  const GradSeeds& seeds, int idx) const {
    if (idx < 0) throw LookupError("Network::backward_to_layer: bad layer index");
    return backward_core(x, acts, seeds, idx, nullptr);
}

ParamGrads Network::zero_param_grads() const {
    ParamGrads pg;
    pg.weight.resize(layers_.size());
    pg.bias.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        pg.weight[i].assign(layers_[i].weight.size(), 0.0);
        pg.bias[i].assign(layers_[i].bias.size(), 0.0);
    }
    return pg;
}

void Network::apply_step(const std::vector<std::vector<double>>& wstep,
                         const std::vector<std::vector<double>>& bstep) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        for (std::size_t j = 0; j < layers_[i].weight.size(); ++j)
            layers_[i].weight[j] += wstep[i][j];
        for (std::size_t j = 0; j < layers_[i].bias.size(); ++j)
            layers_[i].bias[j] += bstep[i][j];
    }
}

int Network::layer_index(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].spec.name == name && !name.empty()) return static_cast<int>(i);
    throw LookupError("unknown layer name '" + name + "'");
}

std::pair<int, int> Network::layer_spatial_size(const std::string& name) const {
    const Layer& l = layers_[layer_index(name)];
    return {l.out_h, l.out_w};
}

void Network::serialize(std::string& out) const {
    json header;
    header["arch_id"] = arch_id_;
    header["input"] = {in_c_, in_h_, in_w_};
    header["num_classes"] = num_classes_;
    json jl = json::array();
    for (const auto& l : layers_) {
        jl.push_back({{"type", layer_type_name(l.spec.type)},
                      {"out_c", l.spec.out_c},
                      {"ksize", l.spec.ksize},
                      {"stride", l.spec.stride},
                      {"pad", l.spec.pad},
                      {"relu", l.spec.relu},
                      {"name", l.spec.name}});
    }
    header["layers"] = jl;
    std::string hs = header.dump();

    std::vector<double> params;
    for (const auto& l : layers_) {
        params.insert(params.end(), l.weight.begin(), l.weight.end());
        params.insert(params.end(), l.bias.begin(), l.bias.end());
    }
    std::uint64_t n = params.size();
    std::uint64_t payload_hash = fnv1a64(params.data(), n * sizeof(double));

    out.clear();
    out.append("UAPNET01", 8);
    std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.append(reinterpret_cast<const char*>(&hlen), 4);
    out.append(hs);
    out.append(reinterpret_cast<const char*>(&n), 8);
    out.append(reinterpret_cast<const char*>(params.data()), n * sizeof(double));
    out.append(reinterpret_cast<const char*>(&payload_hash), 8);
}

Network Network::deserialize(const std::string& bytes) {
    if (bytes.size() < 20 || bytes.compare(0, 8, "UAPNET01") != 0)
        throw CheckpointError("bad network blob magic", "magic");
    std::uint32_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 8, 4);
    if (bytes.size() < 12 + hlen + 16) throw CheckpointError("truncated network blob", "header");
    json header;
    try {
        header = json::parse(bytes.substr(12, hlen));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("unparseable network header: ") + e.what(), "header");
    }

    std::vector<LayerSpec> specs;
    for (const auto& jl : header.at("layers")) {
        LayerSpec s;
        s.type = layer_type_from_name(jl.at("type").get<std::string>());
        s.out_c = jl.at("out_c").get<int>();
        s.ksize = jl.at("ksize").get<int>();
        s.stride = jl.at("stride").get<int>();
        s.pad = jl.at("pad").get<int>();
        s.relu = jl.at("relu").get<bool>();
        s.name = jl.at("name").get<std::string>();
        specs.push_back(s);
    }
    auto input = header.at("input");
    Network net(header.at("arch_id").get<std::string>(), input.at(0).get<int>(),
                input.at(1).get<int>(), input.at(2).get<int>(), specs);
    if (net.num_classes_ != header.at("num_classes").get<int>())
        throw CheckpointError("num_classes disagrees with layer stack", "num_classes");

    std::size_t off = 12 + hlen;
    std::uint64_t n = 0;
    std::memcpy(&n, bytes.data() + off, 8);
    off += 8;
    std::size_t expected = 0;
    for (const auto& l : net.layers_) expected += l.weight.size() + l.bias.size();
    if (n != expected) throw CheckpointError("parameter count mismatch", "params");
    if (bytes.size() < off + n * sizeof(double) + 8)
        throw CheckpointError("truncated parameter payload", "params");

    std::vector<double> params(n);
    std::memcpy(params.data(), bytes.data() + off, n * sizeof(double));
    off += n * sizeof(double);
    std::uint64_t stored_hash = 0;
    std::memcpy(&stored_hash, bytes.data() + off, 8);
    if (stored_hash != fnv1a64(params.data(), n * sizeof(double)))
        throw CheckpointError("parameter payload checksum mismatch", "checksum");

    std::size_t p = 0;
    for (auto& l : net.layers_) {
        std::copy(params.begin() + p, params.begin() + p + l.weight.size(), l.weight.begin());
        p += l.weight.size();
        std::copy(params.begin() + p, params.begin() + p + l.bias.size(), l.bias.begin());
        p += l.bias.size();
    }
    return net;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

Classifier::Classifier(Network net, std::vector<std::string> label_names)
    : net_(std::move(net)), label_names_(std::move(label_names)) {
    if (label_names_.empty()) {
        for (int i = 0; i < net_.num_classes(); ++i)
            label_names_.push_back("class_" + std::to_string(i));
    }
    if (static_cast<int>(label_names_.size()) != net_.num_classes())
        throw ValidationError("Classifier: label_names length must equal num_classes");
}

Classifier Classifier::make_toy(const std::string& arch, int num_classes, int input_hw,
                                std::uint64_t seed) {
    std::vector<LayerSpec> specs;
    auto conv = [](int out_c, int k, int pad, const std::string& name) {
        LayerSpec s;
        s.type = LayerType::Conv;
        s.out_c = out_c;
        s.ksize = k;
        s.stride = 1;
        s.pad = pad;
        s.relu = true;
        s.name = name;
        return s;
    };
    LayerSpec pool;
    pool.type = LayerType::MaxPool2;
    LayerSpec gmax;
    gmax.type = LayerType::GlobalMaxPool;
    LayerSpec dense;
    dense.type = LayerType::Dense;
    dense.out_c = num_classes;
    dense.relu = false;

    if (arch == "cnn_a") {
        specs = {conv(16, 3, 1, "conv1"), pool, conv(32, 3, 1, "conv2"), pool,
                 conv(48, 3, 1, "conv3"), pool, conv(64, 3, 1, "conv4"), gmax, dense};
    } else if (arch == "cnn_b") {
        specs = {conv(12, 5, 2, "conv1"), pool, conv(24, 3, 1, "conv2"), pool,
                 conv(48, 3, 1, "conv3"), pool, gmax, dense};
    } else {
        throw ValidationError("make_toy: unknown arch '" + arch + "' (expected cnn_a or cnn_b)");
    }

    Network net(arch, 3, input_hw, input_hw, specs);
    Rng rng(seed);
    net.init_weights(rng);
    Classifier c(std::move(net), {});
    c.set_model_id(arch);
    return c;
}

void Classifier::validate_input(const Tensor& image) const {
    auto [h, w] = net_.input_size();
    if (image.c != net_.input_channels() || image.h != h || image.w != w)
        throw ShapeError("Classifier: input shape mismatch (expected 3x" + std::to_string(h) +
                         "x" + std::to_string(w) + ")");
    if (!all_finite(image)) throw ValidationError("Classifier: non-finite pixel values");
}

Prediction Classifier::predict(const Tensor& image) const {
    validate_input(image);
    std::vector<double> p = softmax(net_.logits(image));
    int best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = static_cast<int>(i);
    return {best, std::move(p)};
}

std::vector<double> Classifier::logits(const Tensor& image) const {
    validate_input(image);
    return net_.logits(image);
}

Tensor Classifier::feature_maps(const Tensor& image, const std::string& layer_name) const {
    validate_input(image);
    int idx = net_.layer_index(layer_name);
    auto acts = net_.forward(image);
    return acts.out[idx];
}

Tensor Classifier::preprocess(const Tensor& image) const {
    auto [h, w] = net_.input_size();
    Tensor out = bilinear_resize(image, h, w);
    clamp01(out);
    return out;
}

double Classifier::train(const std::vector<LabeledImage>& data, const TrainOptions& opts,
                         Rng& rng) {
    if (data.empty()) throw ValidationError("Classifier::train: empty dataset");
    for (const auto& item : data)
        if (item.label < 0 || item.label >= num_classes())
            throw ValidationError("Classifier::train: label out of range");

    // Flat parameter view for the optimizer.
    std::size_t total = 0;
    for (std::size_t i = 0; i < net_.num_layers(); ++i)
        total += net_.layer_weights(i).size() + net_.layer_bias(i).size();
    AdamState adam(total, opts.lr, opts.weight_decay);
    std::vector<double> flat(total), gflat(total);

    auto gather = [&]() {
        std::size_t p = 0;
        for (std::size_t i = 0; i < net_.num_layers(); ++i) {
            const auto& wv = net_.layer_weights(i);
            std::copy(wv.begin(), wv.end(), flat.begin() + p);
            p += wv.size();
            const auto& bv = net_.layer_bias(i);
            std::copy(bv.begin(), bv.end(), flat.begin() + p);
            p += bv.size();
        }
    };
    auto scatter = [&]() {
        std::size_t p = 0;
        for (std::size_t i = 0; i < net_.num_layers(); ++i) {
            auto& wv = net_.layer_weights(i);
            std::copy(flat.begin() + p, flat.begin() + p + wv.size(), wv.begin());
            p += wv.size();
            auto& bv = net_.layer_bias(i);
            std::copy(flat.begin() + p, flat.begin() + p + bv.size(), bv.begin());
            p += bv.size();
        }
    };

    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    double last_epoch_loss = 0.0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            ParamGrads pg = net_.zero_param_grads();
            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < end; ++bi) {
                const LabeledImage& item = data[order[bi]];
                auto acts = net_.forward(item.pixels);
                std::vector<double> p = softmax(net_.logits_from(acts));
                batch_loss += -std::log(std::max(p[item.label], 1e-300));
                GradSeeds seeds;
                seeds.logit_grad = p;
                seeds.logit_grad[item.label] -= 1.0;
                net_.backward(item.pixels, acts, seeds, &pg);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            std::size_t q = 0;
            for (std::size_t i = 0; i < net_.num_layers(); ++i) {
                for (double g : pg.weight[i]) gflat[q++] = g * inv;
                for (double g : pg.bias[i]) gflat[q++] = g * inv;
            }
            gather();
            adam.step(flat, gflat);
            scatter();
            epoch_loss += batch_loss;
            seen += end - start;
        }
        last_epoch_loss = epoch_loss / static_cast<double>(seen);
    }
    return last_epoch_loss;
}

double Classifier::top1_accuracy(const std::vector<LabeledImage>& data) const {
    if (data.empty()) throw ValidationError("top1_accuracy: empty dataset");
    int correct = 0;
    for (const auto& item : data)
        if (predict(item.pixels).label == item.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

void Classifier::save_checkpoint(const std::string& path) const {
    json header;
    header["label_names"] = label_names_;
    header["model_id"] = model_id_;
    header["training_config_hash"] = training_config_hash_;
    std::string hs = header.dump();

    std::string netblob;
    net_.serialize(netblob);

    std::string out;
    out.append("UAPCKPT1", 8);
    std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.append(reinterpret_cast<const char*>(&hlen), 4);
    out.append(hs);
    out.append(netblob);
    write_text_file(path, out);

    auto [h, w] = net_.input_size();
    json side;
    side["num_classes"] = net_.num_classes();
    side["input_size"] = {h, w};
    side["layer_names"] = net_.feature_layer_names();
    side["training_config_hash"] = training_config_hash_;
    side["arch"] = net_.arch_id();
    write_text_file(path + ".json", side.dump(2) + "\n");
}

Classifier Classifier::load_checkpoint(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("load_checkpoint: no such file: " + path);
    probe.close();

    std::string bytes = read_text_file(path);
    if (bytes.size() < 12 || bytes.compare(0, 8, "UAPCKPT1") != 0)
        throw CheckpointError("bad checkpoint magic", "magic");
    std::uint32_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 8, 4);
    if (bytes.size() < 12 + hlen) throw CheckpointError("truncated checkpoint header", "header");
    json header;
    try {
        header = json::parse(bytes.substr(12, hlen));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("unparseable checkpoint header: ") + e.what(), "header");
    }

    Network net = Network::deserialize(bytes.substr(12 + hlen));

    Classifier c(std::move(net), header.at("label_names").get<std::vector<std::string>>());
    c.set_model_id(header.at("model_id").get<std::string>());
    c.set_training_config_hash(header.at("training_config_hash").get<std::string>());

    // Cross-check the sidecar when present; disagreement means a corrupt or
    // mismatched artifact pair, never a silent truncation.
    std::ifstream side_in(path + ".json");
    if (side_in) {
        json side;
        try {
            side_in >> side;
        } catch (const json::exception& e) {
            throw CheckpointError(std::string("unparseable sidecar: ") + e.what(), "sidecar");
        }
        if (side.at("num_classes").get<int>() != c.num_classes())
            throw CheckpointError("sidecar num_classes does not match checkpoint", "num_classes");
        auto [h, w] = c.input_size();
        auto is = side.at("input_size");
        if (is.at(0).get<int>() != h || is.at(1).get<int>() != w)
            throw CheckpointError("sidecar input_size does not match checkpoint", "input_size");
    }
    return c;
}

AdamState::AdamState(std::size_t n, double lr, double weight_decay, double beta1, double beta2,
                     double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw ShapeError("AdamState::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grad[i] + wd_ * params[i];
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
        const double mh = m_[i] / bc1;
        const double vh = v_[i] / bc2;
        params[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
}

}  // namespace uapatch
