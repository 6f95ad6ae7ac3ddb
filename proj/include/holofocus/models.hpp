#pragma once

#include <memory>

#include <json.hpp>

#include "holofocus/nn/layers.hpp"

namespace holo {

struct CnnBlock {
    int out_channels = 16;
    int stride = 1;
    bool pool = true;
};

// conv(3x3, same) -> relu [-> maxpool2] per block, then GAP -> dense head.
struct CnnConfig {
    int input_size = 64;
    std::vector<CnnBlock> blocks = {{16, 1, true}, {32, 1, true}, {64, 1, true}};
    int n_classes = 10;

    void validate() const;
};

// patch embedding -> +positions -> class token -> pre-norm transformer
// blocks -> final norm -> class-token readout -> dense head.
struct VitConfig {
    int input_size = 64;
    int patch_size = 8;
    int dim = 64;
    int depth = 4;
    int heads = 4;
    double mlp_ratio = 4.0;
    int n_classes = 10;

    int tokens() const {
        int side = input_size / patch_size;
        return side * side + 1;
    }
    int mlp_hidden() const { return static_cast<int>(dim * mlp_ratio); }
    void validate() const;
};

nlohmann::json cnn_config_to_json(const CnnConfig& c);
CnnConfig cnn_config_from_json(const nlohmann::json& j);
nlohmann::json vit_config_to_json(const VitConfig& c);
VitConfig vit_config_from_json(const nlohmann::json& j);

std::int64_t cnn_param_count(const CnnConfig& c);
std::int64_t vit_param_count(const VitConfig& c);

template <std::floating_point T>
struct ModelGraph {
    std::string family; // "cnn" | "vit"
    nlohmann::json config_json;
    std::uint64_t seed = 0;
    int input_size = 0;
    int n_classes = 0;
    std::vector<std::unique_ptr<nn::Layer<T>>> layers;

    nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode = nn::Mode::infer) const {
        nn::Tensor<T> cur = x;
        nn::Cache<T> scratch;
        for (const auto& l : layers) {
            scratch.saved.clear();
            scratch.children.clear();
            cur = l->forward(cur, mode, scratch);
        }
        return cur;
    }

    // Forward keeping per-layer caches; activations[i] is layer i's output.
    nn::Tensor<T> forward_collect(const nn::Tensor<T>& x, std::vector<nn::Cache<T>>& caches,
                                  std::vector<nn::Tensor<T>>* activations = nullptr) const {
        caches.assign(layers.size(), nn::Cache<T>{});
        if (activations) activations->clear();
        nn::Tensor<T> cur = x;
        for (size_t i = 0; i < layers.size(); ++i) {
            cur = layers[i]->forward(cur, nn::Mode::train, caches[i]);
            if (activations) activations->push_back(cur);
        }
        return cur;
    }

    // Backward from the output gradient down to (exclusive) stop_after.
    // Returns the gradient w.r.t. activations[stop_after], or w.r.t. the
    // model input when stop_after is -1. Accumulates parameter grads.
    nn::Tensor<T> backward(const std::vector<nn::Cache<T>>& caches, nn::Tensor<T> grad,
                           int stop_after = -1) {
        if (caches.size() != layers.size())
            throw StaleCache("model backward: cache list does not match layer list");
        for (int i = static_cast<int>(layers.size()) - 1; i > stop_after; --i)
            grad = layers[static_cast<size_t>(i)]->backward(caches[static_cast<size_t>(i)], grad);
        return grad;
    }

    std::vector<nn::ParamRef<T>> params() {
        std::vector<nn::ParamRef<T>> out;
        for (auto& l : layers) l->collect_params(out);
        return out;
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        for (const auto& p : params()) n += p.value->numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->fill(T(0));
    }

    int find_layer(const std::string& path) const {
        for (size_t i = 0; i < layers.size(); ++i)
            if (layers[i]->path() == path) return static_cast<int>(i);
        return -1;
    }

    // Index of the last conv2d layer, -1 when none.
    int last_conv_layer() const {
        int found = -1;
        for (size_t i = 0; i < layers.size(); ++i)
            if (std::string(layers[i]->kind()) == "conv2d") found = static_cast<int>(i);
        return found;
    }
};

template <std::floating_point T>
ModelGraph<T> build_small_cnn(const CnnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelGraph<T> m;
    m.family = "cnn";
    m.config_json = cnn_config_to_json(cfg);
    m.seed = seed;
    m.input_size = cfg.input_size;
    m.n_classes = cfg.n_classes;

    int ch = 1;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        const CnnBlock& blk = cfg.blocks[b];
        const std::string path = "conv" + std::to_string(b + 1);
        Rng rng(seed_stream(seed, path));
        m.layers.push_back(std::make_unique<nn::Conv2d<T>>(path, ch, blk.out_channels, 3,
                                                           blk.stride, 1, rng));
        m.layers.push_back(std::make_unique<nn::Relu<T>>("relu" + std::to_string(b + 1)));
        if (blk.pool)
            m.layers.push_back(std::make_unique<nn::MaxPool2<T>>("pool" + std::to_string(b + 1)));
        ch = blk.out_channels;
    }
    m.layers.push_back(std::make_unique<nn::GlobalAvgPool<T>>("gap"));
    Rng rng(seed_stream(seed, "head"));
    m.layers.push_back(std::make_unique<nn::Dense<T>>("head", ch, cfg.n_classes, rng));
    return m;
}

template <std::floating_point T>
ModelGraph<T> build_small_vit(const VitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelGraph<T> m;
    m.family = "vit";
    m.config_json = vit_config_to_json(cfg);
    m.seed = seed;
    m.input_size = cfg.input_size;
    m.n_classes = cfg.n_classes;

    const int side = cfg.input_size / cfg.patch_size;
    const int patch_tokens = side * side;

    {
        Rng rng(seed_stream(seed, "patch_embed"));
        m.layers.push_back(
            std::make_unique<nn::PatchEmbed<T>>("patch_embed", 1, cfg.patch_size, cfg.dim, rng));
    }
    m.layers.push_back(
        std::make_unique<nn::PositionalEmbed<T>>("pos_embed", patch_tokens, cfg.dim));
    {
        Rng rng(seed_stream(seed, "cls_token"));
        m.layers.push_back(std::make_unique<nn::ClassToken<T>>("cls_token", cfg.dim, rng));
    }
    for (int d = 0; d < cfg.depth; ++d) {
        const std::string path = "block" + std::to_string(d + 1);
        Rng rng(seed_stream(seed, path));
        m.layers.push_back(std::make_unique<nn::TransformerBlock<T>>(path, cfg.dim, cfg.heads,
                                                                     cfg.mlp_hidden(), rng));
    }
    m.layers.push_back(std::make_unique<nn::LayerNorm<T>>("final_norm", cfg.dim));
    m.layers.push_back(std::make_unique<nn::TokenSelect<T>>("cls_readout", 0));
    Rng rng(seed_stream(seed, "head"));
    m.layers.push_back(std::make_unique<nn::Dense<T>>("head", cfg.dim, cfg.n_classes, rng));
    return m;
}

template <std::floating_point T>
ModelGraph<T> build_model_from_json(const std::string& family, const nlohmann::json& cfg,
                                    std::uint64_t seed) {
    if (family == "cnn") return build_small_cnn<T>(cnn_config_from_json(cfg), seed);
    if (family == "vit") return build_small_vit<T>(vit_config_from_json(cfg), seed);
    throw ConfigError("unknown model family '" + family + "' (expected cnn|vit)");
}

} // namespace holo
