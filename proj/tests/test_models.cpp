#include <doctest.h>

#include "gradcheck.hpp"
#include "holofocus/models.hpp"
#include "holofocus/pipeline.hpp"

using namespace holo;
using nn::Tensor;

namespace {

std::vector<float> all_param_bytes(ModelGraph<float>& m) {
    std::vector<float> out;
    for (const auto& p : m.params())
        out.insert(out.end(), p.value->data.begin(), p.value->data.end());
    return out;
}

} // namespace

TEST_CASE("cnn: desk default shape map and determinism") {
    CnnConfig cfg; // 64 -> blocks 16/32/64 with pooling -> 10 classes
    auto model = build_small_cnn<float>(cfg, 7);
    Tensor<float> x({1, 1, 64, 64});
    Tensor<float> logits = model.forward(x);
    CHECK(logits.shape == std::vector<int>{1, 10});

    auto model2 = build_small_cnn<float>(cfg, 7);
    CHECK(all_param_bytes(model) == all_param_bytes(model2));

    auto model3 = build_small_cnn<float>(cfg, 8);
    CHECK(all_param_bytes(model) != all_param_bytes(model3));
}

TEST_CASE("cnn: config validation rejects collapsing spatial size") {
    CnnConfig cfg;
    cfg.input_size = 8;
    cfg.blocks = {{8, 1, true}, {8, 1, true}, {8, 1, true}, {8, 1, true}};
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);

    CnnConfig ok;
    ok.input_size = 16;
    ok.blocks = {{8, 1, true}, {8, 1, true}};
    ok.validate();
}

TEST_CASE("vit: token count, logits shape, divisibility error") {
    VitConfig cfg; // 64 px, patch 8, dim 64, depth 4, heads 4
    CHECK(cfg.tokens() == 65);
    auto model = build_small_vit<float>(cfg, 3);
    Tensor<float> x({2, 1, 64, 64});
    Tensor<float> logits = model.forward(x);
    CHECK(logits.shape == std::vector<int>{2, 10});

    VitConfig bad = cfg;
    bad.patch_size = 7;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);

    VitConfig bad2 = cfg;
    bad2.heads = 5;
    CHECK_THROWS_AS(bad2.validate(), InvalidConfig);
}

TEST_CASE("parameter-count formulas match the built graphs exactly") {
    CnnConfig ccfg;
    auto cnn = build_small_cnn<float>(ccfg, 1);
    CHECK(cnn.param_count() == cnn_param_count(ccfg));

    CnnConfig ccfg2;
    ccfg2.input_size = 32;
    ccfg2.blocks = {{4, 1, true}, {12, 2, false}};
    ccfg2.n_classes = 5;
    auto cnn2 = build_small_cnn<float>(ccfg2, 1);
    CHECK(cnn2.param_count() == cnn_param_count(ccfg2));

    VitConfig vcfg;
    auto vit = build_small_vit<float>(vcfg, 1);
    CHECK(vit.param_count() == vit_param_count(vcfg));

    VitConfig vcfg2;
    vcfg2.input_size = 32;
    vcfg2.patch_size = 4;
    vcfg2.dim = 24;
    vcfg2.depth = 2;
    vcfg2.heads = 3;
    vcfg2.mlp_ratio = 2.0;
    vcfg2.n_classes = 7;
    auto vit2 = build_small_vit<float>(vcfg2, 1);
    CHECK(vit2.param_count() == vit_param_count(vcfg2));
}

TEST_CASE("vit: patch permutation invariance with zero positional embeddings") {
    VitConfig cfg;
    cfg.input_size = 16;
    cfg.patch_size = 4;
    cfg.dim = 16;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.n_classes = 5;
    auto model = build_small_vit<float>(cfg, 11); // positions start at zero

    Tensor<float> x = gradcheck::random_tensor({1, 1, 16, 16}, 21).cast<float>();

    // permute 4x4 patches of the input image
    auto permute_patches = [&](const Tensor<float>& in, const std::vector<int>& perm) {
        Tensor<float> out = in;
        const int p = 4, grid = 4;
        for (int t = 0; t < grid * grid; ++t) {
            const int src = perm[static_cast<size_t>(t)];
            for (int r = 0; r < p; ++r)
                for (int c = 0; c < p; ++c) {
                    const int dr = (t / grid) * p + r, dc = (t % grid) * p + c;
                    const int sr = (src / grid) * p + r, sc = (src % grid) * p + c;
                    out.data[static_cast<size_t>(dr) * 16 + dc] =
                        in.data[static_cast<size_t>(sr) * 16 + sc];
                }
        }
        return out;
    };
    std::vector<int> perm = {5, 0, 3, 2, 1, 4, 7, 6, 10, 9, 8, 11, 15, 12, 13, 14};

    Tensor<float> base = model.forward(x);
    Tensor<float> shuffled = model.forward(permute_patches(x, perm));
    for (int i = 0; i < base.numel(); ++i)
        CHECK(std::abs(base[i] - shuffled[i]) < 1e-5);

    // nonzero positions break the invariance
    const int pos_idx = model.find_layer("pos_embed");
    REQUIRE(pos_idx >= 0);
    auto* pos = dynamic_cast<nn::PositionalEmbed<float>*>(model.layers[static_cast<size_t>(pos_idx)].get());
    REQUIRE(pos != nullptr);
    Rng rng(5);
    for (auto& v : pos->table().data) v = static_cast<float>(rng.uniform(-0.5, 0.5));

    Tensor<float> base2 = model.forward(x);
    Tensor<float> shuffled2 = model.forward(permute_patches(x, perm));
    double diff = 0;
    for (int i = 0; i < base2.numel(); ++i) diff += std::abs(base2[i] - shuffled2[i]);
    CHECK(diff > 1e-4);
}

TEST_CASE("model describe lists every layer with output shapes") {
    CnnConfig cfg;
    auto model = build_small_cnn<float>(cfg, 1);
    auto rows = describe_model(model);
    REQUIRE(rows.size() == model.layers.size());
    CHECK(rows.front().kind == "conv2d");
    CHECK(rows.front().output_shape == std::vector<int>{1, 16, 64, 64});
    CHECK(rows.back().kind == "dense");
    CHECK(rows.back().output_shape == std::vector<int>{1, 10});
    std::int64_t total = 0;
    for (const auto& r : rows) total += r.param_count;
    CHECK(total == cnn_param_count(cfg));
}

TEST_CASE("unknown model family is rejected") {
    CHECK_THROWS_AS(build_model_from_json<float>("mlp", nlohmann::json::object(), 0), ConfigError);
}
