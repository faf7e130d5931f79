#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "safsar/encoders/backbones.hpp"
#include "safsar/episodic/dataset.hpp"
#include "safsar/numerics/grad_check.hpp"

using namespace safsar;

namespace {

VideoTensor random_clip(Rng& rng, std::size_t t, std::size_t h, std::size_t w) {
    VideoTensor v(t, h, w, 1);
    for (auto& x : v.data) x = static_cast<float>(uniform01(rng));
    return v;
}

VideoEncoderConfig small_video(std::size_t dim = 16) {
    VideoEncoderConfig c;
    c.shape = {dim, 4, 4};
    c.depth = 2;
    return c;
}

}  // namespace

TEST_CASE("frame sampling examples") {
    using V = std::vector<std::size_t>;
    CHECK(frame_indices(8, 8) == V{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(frame_indices(16, 8) == V{0, 2, 4, 6, 8, 10, 12, 14});
    CHECK(frame_indices(4, 8) == V{0, 0, 1, 1, 2, 2, 3, 3});
    CHECK_THROWS_AS(frame_indices(8, 0), DomainError);

    for (std::size_t avail = 1; avail < 40; ++avail)
        for (std::size_t t = 1; t < 20; ++t) {
            auto idx = frame_indices(avail, t);
            CHECK(std::is_sorted(idx.begin(), idx.end()));
            CHECK(idx.back() < avail);
        }

    Rng rng(1);
    auto clip = random_clip(rng, 16, 8, 8);
    auto s = sample_frames(clip, 8);
    CHECK(s.frames == 8);
    CHECK(s.height == 8);
    CHECK(s.at(3, 2, 5, 0) == clip.at(6, 2, 5, 0));
}

TEST_CASE("augment examples") {
    Rng rng(3);
    auto clip = random_clip(rng, 4, 12, 12);
    CHECK(flip_horizontal(flip_horizontal(clip)) == clip);
    CHECK(crop(clip, 0, 0, 12, 12) == clip);
    CHECK_THROWS_AS(crop(clip, 0, 0, 13, 12), ConfigError);

    AugmentConfig cfg;
    cfg.crop_height = cfg.crop_width = 8;
    Rng a(99), b(99);
    CHECK(augment(clip, cfg, a) == augment(clip, cfg, b));

    cfg.crop_height = 20;
    CHECK_THROWS_AS(augment(clip, cfg, a), ConfigError);

    AugmentConfig bright;
    bright.jitter_low = 1.5;
    bright.jitter_high = 3.0;
    for (int i = 0; i < 50; ++i) {
        auto out = augment(clip, bright, rng);
        for (float v : out.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    auto ev = eval_view(clip, AugmentConfig{.crop_height = 8, .crop_width = 8});
    CHECK(ev == center_crop(clip, 8, 8));
}

TEST_CASE("tokenize examples") {
    std::vector<std::string> corpus{"brush hair", "a blob moving left at fast pace"};
    auto vocab = Vocabulary::build(corpus);
    CHECK(vocab.token(Vocabulary::kUnk) == "<unk>");
    CHECK(vocab.token(Vocabulary::kPad) == "<pad>");

    auto t = tokenize("Brush hair.", vocab);
    REQUIRE(t.length() == 3);
    CHECK(t.ids[0] == vocab.lookup("brush"));
    CHECK(t.ids[1] == vocab.lookup("hair"));
    CHECK(t.ids[2] == Vocabulary::kUnk);  // "." is its own token, absent from this vocabulary
    CHECK(split_words("Brush hair.") == std::vector<std::string>{"brush", "hair", "."});

    auto oov = tokenize("zzzqqq", vocab);
    CHECK(oov.ids == std::vector<std::size_t>{Vocabulary::kUnk});
    CHECK_THROWS_AS(tokenize("   \t ", vocab), DomainError);

    auto synth = synth_generate(SynthSpec{});
    std::vector<std::string> descs;
    for (const auto& c : synth.classes) descs.push_back(c.description);
    auto sv = Vocabulary::build(descs);
    for (const auto& d : descs)
        for (auto id : tokenize(d, sv).ids) CHECK(id != Vocabulary::kUnk);
}

TEST_CASE("vocabulary file round trip") {
    std::vector<std::string> corpus{"up, down; left"};
    auto vocab = Vocabulary::build(corpus);
    const auto path = std::filesystem::temp_directory_path() / "safsar_vocab_test.txt";
    vocab.save(path);
    std::ifstream in(path);
    std::string first, second;
    std::getline(in, first);
    std::getline(in, second);
    CHECK(first == "<unk>");
    CHECK(second == "<pad>");
    CHECK(Vocabulary::load(path) == vocab);
    std::filesystem::remove(path);
}

TEST_CASE("video encoder contracts") {
    ParamStore<double> store;
    auto cfg = small_video();
    init_video_encoder(store, cfg, 4);
    apply_video_freezing(store, cfg);
    Rng rng(5);
    auto clip = random_clip(rng, 8, 8, 8);

    Tape<double> tape;
    ParamBinding<double> bind(tape, store);
    auto f1 = video_encode(bind, clip, cfg);
    auto f2 = video_encode(bind, clip, cfg);
    CHECK(f1.value().shape() == Shape{16});
    CHECK(f1.value() == f2.value());

    auto bad = random_clip(rng, 8, 6, 8);
    CHECK_THROWS_AS(video_encode(bind, bad, cfg), ConfigError);

    auto grads = bind.gradients(tape.backward(dot(f1, f1)));
    CHECK_FALSE(grads.contains("video.patch_embed.w"));
    CHECK_FALSE(grads.contains("video.patch_embed.b"));
    CHECK(grads.contains("video.layer0.attn.wq"));
}

TEST_CASE("video encoder sees temporal order") {
    auto data = synth_generate(SynthSpec{});
    ParamStore<double> store;
    auto cfg = small_video();
    init_video_encoder(store, cfg, 0);
    Tape<double> tape;
    ParamBinding<double> bind(tape, store, false);
    for (std::size_t i = 0; i < data.items.size(); i += 37) {
        auto clip = sample_frames(data.clips[i], 8);
        auto reversed = clip;
        for (std::size_t t = 0; t < clip.frames; ++t)
            std::copy_n(clip.data.begin() + (clip.frames - 1 - t) * clip.frame_size(), clip.frame_size(),
                        reversed.data.begin() + t * clip.frame_size());
        auto a = video_encode(bind, clip, cfg).value();
        auto b = video_encode(bind, reversed, cfg).value();
        double diff = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) diff += (a[k] - b[k]) * (a[k] - b[k]);
        CHECK(diff > 0.0);
    }
}

TEST_CASE("video encoder gradient of squared norm") {
    ParamStore<double> store;
    auto cfg = small_video();
    init_video_encoder(store, cfg, 2);
    apply_video_freezing(store, cfg);
    Rng rng(6);
    auto clip = random_clip(rng, 4, 8, 8);
    Objective<double> obj = [&](ParamBinding<double>& bind) {
        auto f = video_encode(bind, clip, cfg);
        return dot(f, f);
    };
    GradCheckOptions opt;
    opt.coords_per_tensor = 4;
    auto report = grad_check(obj, store, 1e-4, opt);
    CHECK(report.max_rel_error <= 1e-4);
    CHECK_FALSE(report.per_param.contains("video.patch_embed.w"));
}

TEST_CASE("freezing policy") {
    ParamStore<float> store;
    auto cfg = small_video();
    cfg.depth = 8;
    cfg.freeze_depth = 6;
    init_video_encoder(store, cfg, 0);
    apply_video_freezing(store, cfg);
    for (const auto& e : store.entries()) {
        const bool expect = e.name.starts_with("video.patch_embed.") ||
                            (e.name.starts_with("video.layer") && std::stoul(e.name.substr(11)) < 6);
        CHECK_MESSAGE(e.frozen == expect, e.name);
    }
    cfg.freeze_depth = 9;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("text encoder contracts") {
    ParamStore<double> store;
    TextEncoderConfig cfg{{16, 4, 4}, 2, 10};
    init_text_encoder(store, cfg, 1);
    for (const auto& e : store.entries()) CHECK(e.frozen);

    Tape<double> tape;
    ParamBinding<double> bind(tape, store);
    auto one = text_encode(bind, TokenSequence{{4}}, cfg);
    CHECK(one.value().shape() == Shape{1, 16});
    auto a = text_encode(bind, TokenSequence{{2, 5, 7}}, cfg);
    auto b = text_encode(bind, TokenSequence{{2, 5, 7}}, cfg);
    CHECK(a.value() == b.value());
    CHECK(a.value().shape() == Shape{3, 16});
    CHECK_THROWS_AS(text_encode(bind, TokenSequence{{10}}, cfg), ContractError);
    CHECK_FALSE(a.requires_grad());
}

TEST_CASE("tubelets and positions") {
    VideoTensor clip(4, 8, 8, 1);
    for (std::size_t i = 0; i < clip.data.size(); ++i) clip.data[i] = static_cast<float>(i % 97) / 97.0f;
    auto cfg = small_video();
    auto tok = tubelet_tokens<double>(clip, cfg);
    CHECK(tok.shape() == Shape{2 * 2 * 2, 32});
    // token 1 is the (t=0, y=0, x=1) block; its first entry is pixel (0, 0, 4)
    CHECK(tok(1, 0) == doctest::Approx(clip.at(0, 0, 4, 0)));
    auto pos = sinusoidal_positions<double>(3, 4);
    CHECK(pos(0, 0) == 0.0);
    CHECK(pos(0, 1) == 1.0);
    CHECK(pos(2, 0) == doctest::Approx(std::sin(2.0)));
}
