#include "holofocus/models.hpp"

namespace holo {

using nlohmann::json;

void CnnConfig::validate() const {
    if (input_size < 4) throw InvalidConfig("cnn input_size must be at least 4");
    if (n_classes < 2) throw InvalidConfig("cnn n_classes must be at least 2");
    if (blocks.empty()) throw InvalidConfig("cnn needs at least one block");
    int spatial = input_size;
    for (size_t i = 0; i < blocks.size(); ++i) {
        const CnnBlock& b = blocks[i];
        if (b.out_channels < 1) throw InvalidConfig("cnn block out_channels must be positive");
        if (b.stride < 1) throw InvalidConfig("cnn block stride must be positive");
        spatial = (spatial + 2 - 3) / b.stride + 1; // 3x3 kernel, pad 1
        if (b.pool) spatial /= 2;
        if (spatial < 1)
            throw InvalidConfig("cnn spatial size collapses below 1 after block " +
                                std::to_string(i + 1));
    }
}

void VitConfig::validate() const {
    if (input_size < 4) throw InvalidConfig("vit input_size must be at least 4");
    if (patch_size < 1) throw InvalidConfig("vit patch_size must be positive");
    if (input_size % patch_size != 0)
        throw InvalidConfig("vit input_size " + std::to_string(input_size) +
                            " not divisible by patch_size " + std::to_string(patch_size));
    if (dim < 1 || depth < 1 || heads < 1) throw InvalidConfig("vit dim/depth/heads must be positive");
    if (dim % heads != 0)
        throw InvalidConfig("vit dim " + std::to_string(dim) + " not divisible by heads " +
                            std::to_string(heads));
    if (mlp_ratio <= 0) throw InvalidConfig("vit mlp_ratio must be positive");
    if (n_classes < 2) throw InvalidConfig("vit n_classes must be at least 2");
}

json cnn_config_to_json(const CnnConfig& c) {
    json blocks = json::array();
    for (const auto& b : c.blocks)
        blocks.push_back(
            json{{"out_channels", b.out_channels}, {"stride", b.stride}, {"pool", b.pool}});
    return json{{"input_size", c.input_size}, {"blocks", blocks}, {"n_classes", c.n_classes}};
}

CnnConfig cnn_config_from_json(const json& j) {
    CnnConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    c.blocks.clear();
    for (const auto& b : j.at("blocks")) {
        CnnBlock blk;
        blk.out_channels = b.at("out_channels").get<int>();
        blk.stride = b.value("stride", 1);
        blk.pool = b.value("pool", true);
        c.blocks.push_back(blk);
    }
    c.validate();
    return c;
}

json vit_config_to_json(const VitConfig& c) {
    return json{{"input_size", c.input_size}, {"patch_size", c.patch_size}, {"dim", c.dim},
                {"depth", c.depth},           {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio},
                {"n_classes", c.n_classes}};
}

VitConfig vit_config_from_json(const json& j) {
    VitConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.dim = j.at("dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.value("mlp_ratio", 4.0);
    c.n_classes = j.at("n_classes").get<int>();
    c.validate();
    return c;
}

// weights + biases of every conv block plus the dense head
std::int64_t cnn_param_count(const CnnConfig& c) {
    std::int64_t n = 0;
    int ch = 1;
    for (const auto& b : c.blocks) {
        n += static_cast<std::int64_t>(b.out_channels) * ch * 9 + b.out_channels;
        ch = b.out_channels;
    }
    n += static_cast<std::int64_t>(c.n_classes) * ch + c.n_classes;
    return n;
}

// patch projection, positions, class token, per-block (2 norms, 4 attention
// projections, 2 MLP denses), final norm, head
std::int64_t vit_param_count(const VitConfig& c) {
    const std::int64_t d = c.dim;
    const std::int64_t side = c.input_size / c.patch_size;
    const std::int64_t patch_tokens = side * side;
    const std::int64_t hidden = c.mlp_hidden();
    std::int64_t n = 0;
    n += d * c.patch_size * c.patch_size + d; // patch embed
    n += patch_tokens * d;                    // positions
    n += d;                                   // class token
    std::int64_t per_block = 0;
    per_block += 2 * (2 * d);              // ln1, ln2
    per_block += 4 * (d * d + d);          // q, k, v, o
    per_block += d * hidden + hidden;      // fc1
    per_block += hidden * d + d;           // fc2
    n += c.depth * per_block;
    n += 2 * d;                            // final norm
    n += d * c.n_classes + c.n_classes;    // head
    return n;
}

} // namespace holo
