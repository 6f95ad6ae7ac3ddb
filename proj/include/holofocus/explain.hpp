#pragma once

#include <string>

#include "holofocus/image.hpp"
#include "holofocus/models.hpp"

namespace holo {

enum class AttentionMethod { last_layer, rollout };

const char* to_string(AttentionMethod m);
AttentionMethod attention_method_from_string(const std::string& s);

// Gradient-weighted class activation map at a conv layer: channel weights
// are the spatial mean of d logit_target / d activation, the map is
// ReLU(sum_k w_k A_k) bilinearly upsampled to the input size and
// max-normalized (an all-zero map stays all-zero).
// layer_path "" targets the last conv layer in the graph.
Image grad_cam(ModelGraph<float>& model, const Image& input, int target_class,
               const std::string& layer_path = "");

// Class-token attention over the patch grid, upsampled to input size and
// max-normalized. last_layer reads the final block; rollout composes
// row-normalized (A_mean + I) across blocks.
Image attention_map(const ModelGraph<float>& model, const Image& input, AttentionMethod method);

// Class-token attention over patches before upsampling/normalization;
// rows come from softmax so the returned grid sums to 1.
Image attention_patch_grid(const ModelGraph<float>& model, const Image& input,
                           AttentionMethod method);

// Grayscale base with a color overlay; per-pixel alpha is 0.5 * heatmap so
// a zero heatmap reproduces the base image exactly.
void emit_overlay(const Image& base, const Image& heatmap, const std::string& png_path);

// Shannon entropy (bits) of the map read as a probability distribution
// over pixels; 0 for empty (all-zero) maps.
double spatial_entropy(const Image& heatmap);

void save_heatmap_csv(const Image& heatmap, const std::string& path);

} // namespace holo
