#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "safsar/cache/cache_io.hpp"
#include "safsar/cache/params_io.hpp"

using namespace safsar;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("safsar_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Dataset features(std::size_t classes = 4, std::size_t items = 3, std::size_t dim = 5) {
    Dataset d;
    d.kind = Dataset::Kind::features;
    d.feature_dim = dim;
    Rng rng(1);
    for (std::size_t c = 0; c < classes; ++c) {
        d.classes.push_back({c, "class " + std::to_string(c), c % 2 ? Split::test : Split::train});
        for (std::size_t i = 0; i < items; ++i) {
            std::vector<float> f(dim);
            for (auto& v : f) v = static_cast<float>(uniform(rng, -3, 3));
            d.items.push_back({"item" + std::to_string(c) + "-" + std::to_string(i), c});
            d.features.push_back(f);
        }
    }
    Tensor<float> text({3, dim});
    for (auto& v : text.values()) v = static_cast<float>(uniform(rng, -1, 1));
    d.text_features[1] = text;
    return d;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool has_violation(const json& report, const std::string& kind) {
    for (const auto& v : report["violations"])
        if (v["kind"] == kind) return true;
    return false;
}

}  // namespace

TEST_CASE("feature cache round trip") {
    TempDir dir("roundtrip");
    auto data = features();
    data.features[2][1] = -0.0f;
    data.features[3][0] = std::numeric_limits<float>::denorm_min();
    const auto manifest = dir.path / "cache.json";
    cache::write_cache(data, manifest);
    auto back = cache::read_cache(manifest);
    REQUIRE(back.items.size() == data.items.size());
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        CHECK(back.items[i].id == data.items[i].id);
        CHECK(bit_equal(back.features[i], data.features[i]));
    }
    CHECK(back.text_features.at(1) == data.text_features.at(1));
    CHECK(back.classes.size() == 4);
    CHECK(back.classes[1].split == Split::test);

    const auto first_blob = slurp(dir.path / "cache.bin");
    const auto first_manifest = slurp(manifest);
    cache::write_cache(data, manifest);
    CHECK(slurp(dir.path / "cache.bin") == first_blob);
    CHECK(slurp(manifest) == first_manifest);
    CHECK(first_blob.size() == 20 + 4 * 5 * (12 + 3));
    CHECK(std::string(first_blob.begin(), first_blob.begin() + 4) == "SFSR");

    auto report = cache::validate_cache(manifest);
    CHECK(report["valid"] == true);
    CHECK(report["violations"].empty());
    CHECK(report["record_count"] == 15);
    CHECK(report["class_item_counts"]["2"] == 3);
    CHECK(report["split_disjoint"] == true);
}

TEST_CASE("clip cache round trip") {
    TempDir dir("clips");
    SynthSpec spec;
    spec.classes = 5;
    spec.items_per_class = 2;
    spec.train_classes = 3;
    spec.val_classes = 1;
    spec.frames = 4;
    spec.height = spec.width = 8;
    auto data = synth_generate(spec);
    cache::write_cache(data, dir.path / "clips.json");
    auto back = cache::read_cache(dir.path / "clips.json");
    CHECK(back.kind == Dataset::Kind::clips);
    CHECK(back.clips == data.clips);
    CHECK(cache::validate_cache(dir.path / "clips.json")["valid"] == true);
}

TEST_CASE("empty item set gives a header-only blob") {
    TempDir dir("empty");
    Dataset d;
    d.kind = Dataset::Kind::features;
    d.feature_dim = 4;
    d.classes.push_back({0, "nothing here", Split::train});
    cache::write_cache(d, dir.path / "e.json");
    CHECK(fs::file_size(dir.path / "e.bin") == 20);
    auto h = cache::decode_header(slurp(dir.path / "e.bin"));
    CHECK(h.count == 0);
    CHECK(cache::read_cache(dir.path / "e.json").items.empty());
}

TEST_CASE("header errors") {
    std::vector<float> payload{1, 2, 3, 4, 5, 6};
    auto bytes = cache::encode_blob({cache::kVersion, 3, 2}, payload);
    CHECK(cache::decode_header(bytes).dim == 3);

    auto bad = bytes;
    std::memcpy(bad.data(), "XXXX", 4);
    CHECK_THROWS_AS(cache::decode_header(bad), NotACacheError);

    auto version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(cache::decode_header(version), CacheVersionError);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 4);
    try {
        (void)cache::decode_header(truncated);
        FAIL("expected CacheCorruptionError");
    } catch (const CacheCorruptionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
        CHECK(msg.find(std::to_string(truncated.size())) != std::string::npos);
    }
    CHECK_THROWS_AS(cache::decode_header(std::span<const char>(bytes.data(), 7)), CacheError);
}

TEST_CASE("reader rejects damaged files") {
    TempDir dir("damaged");
    const auto manifest = dir.path / "c.json";
    cache::write_cache(features(), manifest);
    const auto blob = dir.path / "c.bin";
    const auto good = slurp(blob);

    auto cut = good;
    cut.resize(good.size() - 8);
    spit(blob, cut);
    CHECK_THROWS_AS(cache::read_cache(manifest), CacheCorruptionError);
    CHECK(has_violation(cache::validate_cache(manifest), "corruption"));

    auto magic = good;
    magic[0] = 'X';
    spit(blob, magic);
    CHECK_THROWS_AS(cache::read_cache(manifest), NotACacheError);
    spit(blob, good);

    auto j = json::parse(slurp(manifest));
    j["items"][0]["offset"] = 1000;
    std::ofstream(manifest) << j.dump();
    CHECK_THROWS_AS(cache::read_cache(manifest), CacheCorruptionError);
    CHECK(has_violation(cache::validate_cache(manifest), "offset_out_of_bounds"));

    fs::remove(blob);
    CHECK_THROWS_AS(cache::read_cache(manifest), CacheIoError);
    CHECK(cache::validate_cache(dir.path / "missing.json")["valid"] == false);
}

TEST_CASE("validation flags NaN items and split overlap") {
    TempDir dir("validate");
    auto data = features();
    data.features[4][2] = std::numeric_limits<float>::quiet_NaN();
    const auto manifest = dir.path / "v.json";
    cache::write_cache(data, manifest);
    auto report = cache::validate_cache(manifest);
    CHECK(report["valid"] == false);
    CHECK(report["nonfinite_items"] == json::array({data.items[4].id}));
    CHECK(has_violation(report, "non_finite"));

    auto clean = features();
    cache::write_cache(clean, manifest);
    auto j = json::parse(slurp(manifest));
    auto extra = j["classes"][0];
    extra["split"] = "test";
    j["classes"].push_back(extra);
    std::ofstream(manifest) << j.dump();
    auto overlap = cache::validate_cache(manifest);
    CHECK(overlap["split_disjoint"] == false);
    CHECK(has_violation(overlap, "split_overlap"));
}

TEST_CASE("model parameter files") {
    TempDir dir("params");
    auto data = features(6, 3, 16);
    PipelineConfig cfg;
    cfg.shape = {16, 4, 4};
    cfg.model.fusion_layers = 1;
    cfg.model.lambda = 0.5;
    auto model = init_model(data, cfg, 3);
    cache::save_model(model, dir.path / "m.params");
    auto back = cache::load_model(dir.path / "m.params");
    CHECK(back.params.count() == model.params.count());
    for (const auto& e : model.params.entries()) {
        CHECK(back.params.at(e.name) == e.value);
        CHECK(back.params.entry(e.name).frozen == e.frozen);
    }
    CHECK(back.vocab == model.vocab);
    CHECK(back.train_classes == model.train_classes);
    CHECK(back.config.model.lambda == 0.5);
    CHECK(cache::pipeline_config_to_json(back.config) == cache::pipeline_config_to_json(cfg));

    auto bytes = slurp(dir.path / "m.params");
    bytes.resize(bytes.size() / 2);
    spit(dir.path / "m.params", bytes);
    CHECK_THROWS_AS(cache::load_model(dir.path / "m.params"), CacheCorruptionError);
    spit(dir.path / "m.params", {'n', 'o', 'p', 'e', 0, 0, 0, 0});
    CHECK_THROWS_AS(cache::load_model(dir.path / "m.params"), NotACacheError);
}
