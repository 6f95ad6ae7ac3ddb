#include "holofocus/explain.hpp"

#include <cmath>

#include "holofocus/io/csv.hpp"
#include "holofocus/io/plot.hpp"
#include "holofocus/io/png_io.hpp"

namespace holo {

const char* to_string(AttentionMethod m) {
    return m == AttentionMethod::last_layer ? "last_layer" : "rollout";
}

AttentionMethod attention_method_from_string(const std::string& s) {
    if (s == "last_layer") return AttentionMethod::last_layer;
    if (s == "rollout") return AttentionMethod::rollout;
    throw ConfigError("unknown attention method '" + s + "' (expected last_layer|rollout)");
}

namespace {

nn::Tensor<float> input_tensor(const Image& input, int expect_size) {
    if (input.height != expect_size || input.width != expect_size)
        throw ShapeMismatch("explain input is " + std::to_string(input.height) + "x" +
                            std::to_string(input.width) + ", model expects " +
                            std::to_string(expect_size));
    nn::Tensor<float> x({1, 1, input.height, input.width});
    for (size_t i = 0; i < input.size(); ++i) x.data[i] = static_cast<float>(input.pix[i]);
    return x;
}

Image max_normalize(Image img) {
    const double mx = image_max(img);
    if (mx > 0)
        for (double& v : img.pix) v /= mx;
    return img;
}

} // namespace

Image grad_cam(ModelGraph<float>& model, const Image& input, int target_class,
               const std::string& layer_path) {
    int layer_idx;
    if (layer_path.empty()) {
        layer_idx = model.last_conv_layer();
        if (layer_idx < 0) throw NotConvolutional("model has no conv2d layer");
    } else {
        layer_idx = model.find_layer(layer_path);
        if (layer_idx < 0) throw NoSuchLayer("no layer named '" + layer_path + "'");
        if (std::string(model.layers[static_cast<size_t>(layer_idx)]->kind()) != "conv2d")
            throw NotConvolutional("layer '" + layer_path + "' is " +
                                   model.layers[static_cast<size_t>(layer_idx)]->kind() +
                                   ", not conv2d");
    }
    if (target_class < 0 || target_class >= model.n_classes)
        throw LabelOutOfRange("target class " + std::to_string(target_class) + " outside [0, " +
                              std::to_string(model.n_classes) + ")");

    nn::Tensor<float> x = input_tensor(input, model.input_size);
    std::vector<nn::Cache<float>> caches;
    std::vector<nn::Tensor<float>> activations;
    nn::Tensor<float> logits = model.forward_collect(x, caches, &activations);

    nn::Tensor<float> grad({1, model.n_classes});
    grad.data[static_cast<size_t>(target_class)] = 1.0f;
    model.zero_grads();
    nn::Tensor<float> dact = model.backward(caches, grad, layer_idx);
    model.zero_grads(); // param grads from the probe are discarded

    const nn::Tensor<float>& act = activations[static_cast<size_t>(layer_idx)];
    const int c = act.dim(1), h = act.dim(2), w = act.dim(3);
    Image cam(h, w);
    for (int ch = 0; ch < c; ++ch) {
        const float* gb = dact.data.data() + static_cast<size_t>(ch) * h * w;
        double wk = 0.0;
        for (int i = 0; i < h * w; ++i) wk += gb[i];
        wk /= h * w;
        const float* ab = act.data.data() + static_cast<size_t>(ch) * h * w;
        for (int i = 0; i < h * w; ++i) cam.pix[static_cast<size_t>(i)] += wk * ab[i];
    }
    for (double& v : cam.pix) v = std::max(0.0, v);
    return max_normalize(bilinear_upsample(cam, input.height, input.width));
}

namespace {

// Mean over heads of one block's attention, [T, T] for a single image.
Image mean_attention(const nn::Tensor<float>& attn) {
    const int heads = attn.dim(1), t = attn.dim(2);
    Image a(t, t, 0.0);
    for (int h = 0; h < heads; ++h) {
        const float* ab = attn.data.data() + static_cast<size_t>(h) * t * t;
        for (int i = 0; i < t * t; ++i) a.pix[static_cast<size_t>(i)] += ab[i];
    }
    for (double& v : a.pix) v /= heads;
    return a;
}

} // namespace

Image attention_patch_grid(const ModelGraph<float>& model, const Image& input,
                           AttentionMethod method) {
    if (model.family != "vit") throw NotViT("attention maps require a vit model");
    nn::Tensor<float> x = input_tensor(input, model.input_size);
    std::vector<nn::Cache<float>> caches;
    model.forward_collect(x, caches);

    std::vector<Image> per_block;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (std::string(model.layers[i]->kind()) != "transformer_block") continue;
        const auto& attn_cache = nn::TransformerBlock<float>::attention_cache(caches[i]);
        per_block.push_back(
            mean_attention(nn::MultiHeadSelfAttention<float>::attention_from_cache(attn_cache)));
    }
    if (per_block.empty()) throw NotViT("model has no transformer blocks");

    const int t = per_block.back().height;
    std::vector<double> cls_row(static_cast<size_t>(t));
    if (method == AttentionMethod::last_layer) {
        for (int u = 0; u < t; ++u) cls_row[static_cast<size_t>(u)] = per_block.back().at(0, u);
    } else {
        // R = rownorm(A_L + I) ... rownorm(A_1 + I)
        Image r(t, t, 0.0);
        for (int i = 0; i < t; ++i) r.at(i, i) = 1.0;
        for (const Image& a : per_block) {
            Image m(t, t, 0.0);
            for (int i = 0; i < t; ++i) {
                double row_sum = 0.0;
                for (int u = 0; u < t; ++u) row_sum += a.at(i, u) + (i == u ? 1.0 : 0.0);
                for (int u = 0; u < t; ++u)
                    m.at(i, u) = (a.at(i, u) + (i == u ? 1.0 : 0.0)) / row_sum;
            }
            Image next(t, t, 0.0);
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < t; ++j) {
                    double acc = 0.0;
                    for (int k = 0; k < t; ++k) acc += m.at(i, k) * r.at(k, j);
                    next.at(i, j) = acc;
                }
            r = next;
        }
        for (int u = 0; u < t; ++u) cls_row[static_cast<size_t>(u)] = r.at(0, u);
    }

    // Drop the class-token column and renormalize over patches, so the grid
    // remains a distribution (sums to 1).
    const int patches = t - 1;
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches))));
    if (side * side != patches) throw ShapeMismatch("patch count is not a square");
    double sum = 0.0;
    for (int u = 1; u < t; ++u) sum += cls_row[static_cast<size_t>(u)];
    Image grid(side, side);
    for (int u = 1; u < t; ++u)
        grid.pix[static_cast<size_t>(u - 1)] = sum > 0 ? cls_row[static_cast<size_t>(u)] / sum : 0.0;
    return grid;
}

Image attention_map(const ModelGraph<float>& model, const Image& input, AttentionMethod method) {
    Image grid = attention_patch_grid(model, input, method);
    return max_normalize(bilinear_upsample(grid, input.height, input.width));
}

void emit_overlay(const Image& base, const Image& heatmap, const std::string& png_path) {
    if (!base.same_shape(heatmap))
        throw ShapeMismatch("overlay base " + std::to_string(base.height) + "x" +
                            std::to_string(base.width) + " vs heatmap " +
                            std::to_string(heatmap.height) + "x" + std::to_string(heatmap.width));
    std::vector<std::uint8_t> rgb(base.size() * 3);
    for (size_t i = 0; i < base.size(); ++i) {
        const double g = std::clamp(base.pix[i], 0.0, 1.0);
        const double h = std::clamp(heatmap.pix[i], 0.0, 1.0);
        const io::Rgb c = io::colormap_viridis(h);
        const double a = 0.5 * h;
        rgb[3 * i] = static_cast<std::uint8_t>(std::lround(((1 - a) * g * 255.0) + a * c.r));
        rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround(((1 - a) * g * 255.0) + a * c.g));
        rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(((1 - a) * g * 255.0) + a * c.b));
    }
    io::write_png_rgb8(png_path, rgb, base.height, base.width);
}

double spatial_entropy(const Image& heatmap) {
    double sum = 0.0;
    for (double v : heatmap.pix) {
        if (v < 0) throw OutOfRange("spatial_entropy expects a nonnegative map");
        sum += v;
    }
    if (sum <= 0) return 0.0;
    double h = 0.0;
    for (double v : heatmap.pix) {
        if (v <= 0) continue;
        const double p = v / sum;
        h -= p * std::log2(p);
    }
    return h;
}

void save_heatmap_csv(const Image& heatmap, const std::string& path) {
    std::vector<std::string> cols;
    cols.reserve(static_cast<size_t>(heatmap.width));
    for (int c = 0; c < heatmap.width; ++c) cols.push_back("c" + std::to_string(c));
    io::CsvWriter csv(cols);
    for (int r = 0; r < heatmap.height; ++r) {
        std::vector<double> row(static_cast<size_t>(heatmap.width));
        for (int c = 0; c < heatmap.width; ++c) row[static_cast<size_t>(c)] = heatmap.at(r, c);
        csv.add_row(row);
    }
    csv.save(path);
}

} // namespace holo
