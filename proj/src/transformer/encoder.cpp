#include "safsar/transformer/encoder.hpp"

#include <cmath>

namespace safsar {

void EncoderShape::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw ConfigError("model dimension " + std::to_string(dim) +
                          " is not divisible by head count " + std::to_string(heads));
    }
    if (ffn_ratio == 0) throw ConfigError("feed-forward expansion ratio must be positive");
}

template <typename T>
void init_encoder_layer(ParamStore<T>& store, const std::string& prefix, const EncoderShape& shape,
                        std::uint64_t seed, bool frozen) {
    shape.validate();
    const std::size_t d = shape.dim, h = shape.hidden();
    auto matrix = [&](const char* leaf, std::size_t in, std::size_t out) {
        const std::string name = prefix + "." + leaf;
        store.add(name, glorot_uniform<T>(in, out, seed, name), frozen);
    };
    auto filled = [&](const char* leaf, std::size_t n, T value) {
        store.add(prefix + "." + leaf, Tensor<T>({n}, value), frozen);
    };
    matrix("attn.wq", d, d);
    matrix("attn.wk", d, d);
    matrix("attn.wv", d, d);
    matrix("attn.wo", d, d);
    filled("attn.bo", d, T{0});
    matrix("ffn.w1", d, h);
    filled("ffn.b1", h, T{0});
    matrix("ffn.w2", h, d);
    filled("ffn.b2", d, T{0});
    filled("ln1.gain", d, T{1});
    filled("ln1.bias", d, T{0});
    filled("ln2.gain", d, T{1});
    filled("ln2.bias", d, T{0});
}

template <typename T>
void init_encoder_stack(ParamStore<T>& store, const std::string& prefix, const EncoderShape& shape,
                        std::size_t depth, std::uint64_t seed, bool frozen) {
    for (std::size_t i = 0; i < depth; ++i) {
        init_encoder_layer(store, prefix + ".layer" + std::to_string(i), shape, seed, frozen);
    }
}

template <typename T>
std::size_t encoder_stack_depth(const ParamStore<T>& store, const std::string& prefix) {
    std::size_t depth = 0;
    while (store.contains(prefix + ".layer" + std::to_string(depth) + ".attn.wq")) ++depth;
    return depth;
}

template <typename T>
EncoderLayerParams<T> bind_encoder_layer(ParamBinding<T>& bind, const std::string& prefix,
                                         std::size_t heads) {
    EncoderLayerParams<T> p;
    p.wq = bind(prefix + ".attn.wq");
    p.wk = bind(prefix + ".attn.wk");
    p.wv = bind(prefix + ".attn.wv");
    p.wo = bind(prefix + ".attn.wo");
    p.bo = bind(prefix + ".attn.bo");
    p.w1 = bind(prefix + ".ffn.w1");
    p.b1 = bind(prefix + ".ffn.b1");
    p.w2 = bind(prefix + ".ffn.w2");
    p.b2 = bind(prefix + ".ffn.b2");
    p.ln1_gain = bind(prefix + ".ln1.gain");
    p.ln1_bias = bind(prefix + ".ln1.bias");
    p.ln2_gain = bind(prefix + ".ln2.gain");
    p.ln2_bias = bind(prefix + ".ln2.bias");
    p.heads = heads;
    return p;
}

template <typename T>
EncoderStackParams<T> bind_encoder_stack(ParamBinding<T>& bind, const std::string& prefix,
                                         std::size_t heads) {
    EncoderStackParams<T> stack;
    const std::size_t depth = encoder_stack_depth(bind.store(), prefix);
    for (std::size_t i = 0; i < depth; ++i) {
        stack.layers.push_back(bind_encoder_layer(bind, prefix + ".layer" + std::to_string(i), heads));
    }
    return stack;
}

template <typename T>
Var<T> multi_head_attention(const Var<T>& x, const EncoderLayerParams<T>& p) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 2) {
        throw DimensionError("attention expects an n x d token matrix, got " + shape_str(xv.shape()));
    }
    const std::size_t d = xv.cols();
    EncoderShape{d, p.heads, 1}.validate();
    const std::size_t dh = d / p.heads;
    const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));

    Var<T> q = matmul(x, p.wq);
    Var<T> k = matmul(x, p.wk);
    Var<T> v = matmul(x, p.wv);
    std::vector<Var<T>> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        Var<T> qh = slice_cols(q, h * dh, dh);
        Var<T> kh = slice_cols(k, h * dh, dh);
        Var<T> vh = slice_cols(v, h * dh, dh);
        Var<T> weights = softmax(scale(matmul_nt(qh, kh), inv_sqrt));
        heads.push_back(matmul(weights, vh));
    }
    Var<T> merged = p.heads == 1 ? heads[0] : concat_cols(std::span<const Var<T>>(heads));
    return add_row(matmul(merged, p.wo), p.bo);
}

template <typename T>
Var<T> encoder_layer(const Var<T>& x, const EncoderLayerParams<T>& p) {
    Var<T> x1 = add(x, multi_head_attention(layer_norm(x, p.ln1_gain, p.ln1_bias), p));
    Var<T> hidden = gelu(add_row(matmul(layer_norm(x1, p.ln2_gain, p.ln2_bias), p.w1), p.b1));
    return add(x1, add_row(matmul(hidden, p.w2), p.b2));
}

template <typename T>
Var<T> encoder_stack(const Var<T>& x, const EncoderStackParams<T>& p) {
    Var<T> out = x;
    for (const auto& layer : p.layers) out = encoder_layer(out, layer);
    return out;
}

#define SAFSAR_INSTANTIATE_ENCODER(T)                                                          \
    template void init_encoder_layer<T>(ParamStore<T>&, const std::string&, const EncoderShape&, \
                                        std::uint64_t, bool);                                  \
    template void init_encoder_stack<T>(ParamStore<T>&, const std::string&, const EncoderShape&, \
                                        std::size_t, std::uint64_t, bool);                     \
    template std::size_t encoder_stack_depth<T>(const ParamStore<T>&, const std::string&);     \
    template EncoderLayerParams<T> bind_encoder_layer<T>(ParamBinding<T>&, const std::string&, \
                                                         std::size_t);                         \
    template EncoderStackParams<T> bind_encoder_stack<T>(ParamBinding<T>&, const std::string&, \
                                                         std::size_t);                         \
    template Var<T> multi_head_attention<T>(const Var<T>&, const EncoderLayerParams<T>&);      \
    template Var<T> encoder_layer<T>(const Var<T>&, const EncoderLayerParams<T>&);             \
    template Var<T> encoder_stack<T>(const Var<T>&, const EncoderStackParams<T>&);

SAFSAR_INSTANTIATE_ENCODER(float)
SAFSAR_INSTANTIATE_ENCODER(double)

}  // namespace safsar
