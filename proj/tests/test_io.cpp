#include <doctest.h>

#include <fstream>

#include "gradcheck.hpp"
#include "holofocus/io/checkpoint.hpp"
#include "holofocus/io/csv.hpp"
#include "holofocus/io/manifest.hpp"
#include "holofocus/io/png_io.hpp"
#include "test_util.hpp"

using namespace holo;

TEST_CASE("png gray16 round-trips exactly") {
    testutil::TempDir tmp("png");
    std::vector<std::uint16_t> data(32 * 20);
    Rng rng(1);
    for (auto& v : data) v = static_cast<std::uint16_t>(rng.uniform_int(65536));
    const std::string path = tmp.str() + "/img.png";
    io::write_png_gray16(path, data, 32, 20);

    int h = 0, w = 0;
    auto back = io::read_png_gray16(path, h, w);
    CHECK(h == 32);
    CHECK(w == 20);
    CHECK(back == data);
}

TEST_CASE("intensity png keeps physical values within quantization error") {
    testutil::TempDir tmp("intensity");
    Image img(16, 16);
    Rng rng(2);
    for (double& v : img.pix) v = rng.uniform(1.5, 9.5);
    const std::string path = tmp.str() + "/i.png";
    auto [lo, hi] = io::save_intensity_png(path, img);
    Image back = io::load_intensity_png(path, lo, hi);
    const double quantum = (hi - lo) / 65535.0;
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(back.pix[i] - img.pix[i]) <= 0.5 * quantum + 1e-12);
}

TEST_CASE("manifest json round-trips") {
    testutil::TempDir tmp("manifest");
    io::DatasetManifest m;
    m.scenario = "SFN";
    m.roi_anchor = "bottom_left";
    m.image_size = 24;
    m.roi_size = 48;
    m.dataset.n_classes = 4;
    m.dataset.per_class = 7;
    m.dataset.seed = 123456789ULL;
    io::ManifestEntry e;
    e.path = "images/x.png";
    e.z_true_um = 52.5;
    e.class_label = 2;
    e.scenario = "SFN";
    e.seed = 42;
    e.intensity_min = 0.25;
    e.intensity_max = 4.75;
    e.source_raw = "../raw/images/x.png";
    m.entries.push_back(e);

    const std::string path = tmp.str() + "/manifest.json";
    io::save_manifest(m, path);
    auto back = io::load_manifest(path);
    CHECK(back.scenario == "SFN");
    CHECK(back.roi_anchor == "bottom_left");
    CHECK(back.image_size == 24);
    CHECK(back.roi_size == 48);
    CHECK(back.dataset.n_classes == 4);
    REQUIRE(back.entries.size() == 1);
    CHECK(back.entries[0].path == e.path);
    CHECK(back.entries[0].z_true_um == e.z_true_um);
    CHECK(back.entries[0].intensity_max == e.intensity_max);
    CHECK(back.entries[0].source_raw == e.source_raw);
    CHECK(back.root_dir == tmp.str());
}

TEST_CASE("json files are byte-deterministic with sorted keys") {
    testutil::TempDir tmp("json");
    nlohmann::json j{{"zeta", 1}, {"alpha", 2}, {"mid", 3.25}};
    const std::string a = tmp.str() + "/a.json";
    const std::string b = tmp.str() + "/b.json";
    io::write_json_file(j, a);
    io::write_json_file(j, b);
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(a) == slurp(b));
    const std::string text = slurp(a);
    CHECK(text.find("alpha") < text.find("mid"));
    CHECK(text.find("mid") < text.find("zeta"));
}

TEST_CASE("csv formatting is stable") {
    io::CsvWriter csv({"a", "b"});
    csv.add_row({1.0, 0.125});
    csv.add_row({2.5e-7, 3});
    CHECK(csv.str() == "a,b\n1,0.125\n2.5e-07,3\n");
}

TEST_CASE("checkpoint save/load restores exact parameter bytes") {
    testutil::TempDir tmp("ckpt");
    CnnConfig cfg;
    cfg.input_size = 16;
    cfg.blocks = {{4, 1, true}, {8, 1, true}};
    cfg.n_classes = 3;
    auto model = build_small_cnn<float>(cfg, 99);
    // make the state distinguishable from a fresh build
    for (auto& p : model.params())
        for (auto& v : p.value->data) v += 0.125f;

    io::save_checkpoint(model, tmp.str() + "/ck", 17,
                        nlohmann::json{{"note", "unit-test"}});
    auto meta = io::read_checkpoint_meta(tmp.str() + "/ck");
    CHECK(meta.at("epoch").get<int>() == 17);
    CHECK(meta.at("family").get<std::string>() == "cnn");

    auto loaded = io::load_checkpoint(tmp.str() + "/ck");
    auto pa = model.params();
    auto pb = loaded.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].value->data == pb[i].value->data);
    }

    // inference agrees bit for bit
    auto x = gradcheck::random_tensor({1, 1, 16, 16}, 5).cast<float>();
    CHECK(model.forward(x).data == loaded.forward(x).data);
}
