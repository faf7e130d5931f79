#include <doctest.h>

#include "../common/oracles.hpp"
#include "safsar/numerics/grad_check.hpp"
#include "safsar/transformer/encoder.hpp"

using namespace safsar;

namespace {

struct Fixture {
    ParamStore<double> store;
    EncoderShape shape;
    std::size_t depth;

    Fixture(std::size_t d, std::size_t h, std::size_t depth_, std::uint64_t seed) : shape{d, h, 4}, depth(depth_) {
        init_encoder_stack(store, "enc", shape, depth, seed);
        Rng rng(derive_seed(seed, "jitter"));
        oracle::jitter_norms(store, rng);
    }

    std::vector<oracle::Layer> layers() const {
        std::vector<oracle::Layer> out;
        for (std::size_t i = 0; i < depth; ++i)
            out.push_back(oracle::layer_from(store, "enc.layer" + std::to_string(i), shape.heads));
        return out;
    }
};

oracle::Mat run_stack(const Fixture& f, const oracle::Mat& x) {
    Tape<double> tape;
    ParamBinding<double> bind(tape, f.store, false);
    auto out = encoder_stack(tape.constant(oracle::to_tensor(x)), bind_encoder_stack(bind, "enc", f.shape.heads));
    return oracle::to_mat(out.value());
}

}  // namespace

TEST_CASE("attention examples") {
    Fixture f(4, 2, 1, 1);
    Rng rng(2);
    Tape<double> tape;
    ParamBinding<double> bind(tape, f.store, false);
    auto p = bind_encoder_layer(bind, "enc.layer0", 2);
    const auto l = f.layers()[0];

    SUBCASE("single token") {
        auto x = oracle::random_mat(rng, 1, 4);
        auto out = oracle::to_mat(multi_head_attention(tape.constant(oracle::to_tensor(x)), p).value());
        auto v = oracle::matmul(x, l.wv);
        auto expect = oracle::matmul(v, l.wo);
        for (std::size_t j = 0; j < 4; ++j) expect[0][j] += l.bo[j];
        CHECK(oracle::max_abs_diff(out, expect) <= 1e-12);
    }
    SUBCASE("identical tokens give identical rows") {
        auto r = oracle::random_vec(rng, 4);
        oracle::Mat x(5, r);
        auto out = oracle::to_mat(multi_head_attention(tape.constant(oracle::to_tensor(x)), p).value());
        for (std::size_t i = 1; i < 5; ++i) CHECK(oracle::max_abs_diff(out[i], out[0]) <= 1e-14);
    }
    SUBCASE("per-head loop oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            auto x = oracle::random_mat(rng, 3, 4);
            auto out = oracle::to_mat(multi_head_attention(tape.constant(oracle::to_tensor(x)), p).value());
            CHECK(oracle::max_abs_diff(out, oracle::attention(x, l)) <= 1e-10);
        }
    }
}

TEST_CASE("head count must divide the width") {
    CHECK_THROWS_AS((EncoderShape{6, 4, 4}.validate()), ConfigError);
    CHECK_NOTHROW((EncoderShape{8, 4, 4}.validate()));
    ParamStore<double> s;
    init_encoder_layer(s, "x", EncoderShape{8, 4, 4}, 0);
    Tape<double> tape;
    ParamBinding<double> bind(tape, s, false);
    auto p = bind_encoder_layer(bind, "x", 3);
    CHECK_THROWS_AS(multi_head_attention(tape.constant(Tensor<double>({2, 8}, 0.1)), p), ConfigError);
}

TEST_CASE("encoder layer examples") {
    Fixture f(8, 2, 1, 3);
    Rng rng(4);
    SUBCASE("zeroed residual branches give the identity") {
        for (const char* n : {"enc.layer0.attn.wo", "enc.layer0.attn.bo", "enc.layer0.ffn.w2", "enc.layer0.ffn.b2"})
            f.store.at(n).fill(0.0);
        auto x = oracle::random_mat(rng, 4, 8);
        CHECK(run_stack(f, x) == x);
    }
    SUBCASE("composed oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            auto x = oracle::random_mat(rng, 5, 8);
            CHECK(oracle::max_abs_diff(run_stack(f, x), oracle::encoder_layer(x, f.layers()[0])) <= 1e-10);
        }
    }
    SUBCASE("row permutation equivariance") {
        auto x = oracle::random_mat(rng, 6, 8);
        std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
        oracle::Mat px;
        for (auto i : perm) px.push_back(x[i]);
        auto y = run_stack(f, x), py = run_stack(f, px);
        for (std::size_t i = 0; i < perm.size(); ++i) CHECK(oracle::max_abs_diff(py[i], y[perm[i]]) <= 1e-12);
    }
}

TEST_CASE("encoder stack examples") {
    Rng rng(8);
    auto x = oracle::random_mat(rng, 5, 16);
    Fixture empty(16, 4, 0, 1);
    CHECK(run_stack(empty, x) == x);

    Fixture two(16, 4, 2, 5);
    auto layers = two.layers();
    CHECK(oracle::max_abs_diff(run_stack(two, x), oracle::encoder_layer(oracle::encoder_layer(x, layers[0]), layers[1])) <=
          1e-10);
    CHECK(encoder_stack_depth(two.store, "enc") == 2);
    CHECK(run_stack(two, x).size() == 5);
}

TEST_CASE("encoder stack gradient of the output mean") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Fixture f(16, 4, 2, seed);
        Rng rng(derive_seed(seed, "x"));
        const auto x = oracle::to_tensor(oracle::random_mat(rng, 5, 16));
        Objective<double> obj = [&](ParamBinding<double>& bind) {
            auto out = encoder_stack(bind.tape().constant(x), bind_encoder_stack(bind, "enc", 4));
            return mean_rows(reshape(out, {80, 1}));
        };
        GradCheckOptions opt;
        opt.coords_per_tensor = 6;
        opt.seed = seed;
        auto report = grad_check(obj, f.store, 1e-4, opt);
        CAPTURE(report.worst_param);
        CHECK(report.max_rel_error <= 1e-4);
    }
}
