#include "holofocus/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "holofocus/io/manifest.hpp"

namespace holo::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs assume a little-endian host");

std::string blob_name(const std::string& param_name) {
    std::string s = param_name;
    for (char& c : s)
        if (c == '/' || c == '.') c = '_';
    return s + ".bin";
}

void write_blob(const std::string& path, const std::vector<float>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw IoError("short write on " + path);
}

void read_blob(const std::string& path, std::vector<float>& data) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot read " + path);
    const auto bytes = static_cast<size_t>(in.tellg());
    if (bytes != data.size() * sizeof(float))
        throw IoError("blob " + path + " has " + std::to_string(bytes) + " bytes, expected " +
                      std::to_string(data.size() * sizeof(float)));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
}

} // namespace

void save_checkpoint(ModelGraph<float>& model, const std::string& dir, int epoch,
                     const json& extra) {
    fs::create_directories(dir);
    json params = json::array();
    for (auto& p : model.params()) {
        const std::string blob = blob_name(p.name);
        params.push_back(json{{"name", p.name}, {"shape", p.value->shape}, {"file", blob}});
        write_blob((fs::path(dir) / blob).string(), p.value->data);
    }
    json meta{{"schema", "holofocus-checkpoint/1"},
              {"family", model.family},
              {"config", model.config_json},
              {"seed", model.seed},
              {"epoch", epoch},
              {"params", params}};
    if (!extra.is_null() && !extra.empty()) meta["extra"] = extra;
    write_json_file(meta, (fs::path(dir) / "model.json").string());
}

json read_checkpoint_meta(const std::string& dir) {
    json meta = read_json_file((fs::path(dir) / "model.json").string());
    if (meta.value("schema", "") != "holofocus-checkpoint/1")
        throw IoError("unexpected checkpoint schema in " + dir);
    return meta;
}

ModelGraph<float> load_checkpoint(const std::string& dir) {
    json meta = read_checkpoint_meta(dir);
    ModelGraph<float> model = build_model_from_json<float>(
        meta.at("family").get<std::string>(), meta.at("config"), meta.at("seed").get<std::uint64_t>());

    auto params = model.params();
    const json& table = meta.at("params");
    if (table.size() != params.size())
        throw IoError("checkpoint parameter table does not match rebuilt model");
    for (size_t i = 0; i < params.size(); ++i) {
        const json& row = table[i];
        if (row.at("name").get<std::string>() != params[i].name)
            throw IoError("checkpoint parameter order mismatch at " + params[i].name);
        const auto shape = row.at("shape").get<std::vector<int>>();
        if (shape != params[i].value->shape)
            throw IoError("checkpoint shape mismatch on " + params[i].name);
        read_blob((fs::path(dir) / row.at("file").get<std::string>()).string(),
                  params[i].value->data);
    }
    return model;
}

} // namespace holo::io
