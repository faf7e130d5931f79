#pragma once

// Pre-norm transformer encoder layers over token matrices (n x d):
//
//   X' = X + MHA(LN1(X))
//   Y  = X' + W2 * GELU(W1 * LN2(X') + b1) + b2
//
// No masking and no positional encoding inside the stack, so every layer is
// equivariant under row permutations of X.

#include <string>
#include <vector>

#include "safsar/numerics/param_store.hpp"

namespace safsar {

struct EncoderShape {
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t ffn_ratio = 4;

    std::size_t head_dim() const { return dim / heads; }
    std::size_t hidden() const { return dim * ffn_ratio; }
    /// Throws ConfigError unless dim is a positive multiple of heads.
    void validate() const;
};

/// Bound (tape-resident) parameters of one encoder layer.
template <typename T>
struct EncoderLayerParams {
    Var<T> wq, wk, wv;  // d x d, heads packed along columns
    Var<T> wo, bo;      // d x d, d
    Var<T> w1, b1;      // d x (r d), r d
    Var<T> w2, b2;      // (r d) x d, d
    Var<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    std::size_t heads = 1;
};

template <typename T>
struct EncoderStackParams {
    std::vector<EncoderLayerParams<T>> layers;
};

/// Adds one layer's tensors under `prefix` (e.g. "fusion.layer0"). Weight
/// matrices are Glorot-uniform from (seed, name); biases zero; gains one.
template <typename T>
void init_encoder_layer(ParamStore<T>& store, const std::string& prefix, const EncoderShape& shape,
                        std::uint64_t seed, bool frozen = false);

/// Adds `depth` layers named prefix.layer0 .. prefix.layer{depth-1}.
template <typename T>
void init_encoder_stack(ParamStore<T>& store, const std::string& prefix, const EncoderShape& shape,
                        std::size_t depth, std::uint64_t seed, bool frozen = false);

/// Number of consecutive prefix.layerN entries present in the store.
template <typename T>
std::size_t encoder_stack_depth(const ParamStore<T>& store, const std::string& prefix);

template <typename T>
EncoderLayerParams<T> bind_encoder_layer(ParamBinding<T>& bind, const std::string& prefix,
                                         std::size_t heads);

template <typename T>
EncoderStackParams<T> bind_encoder_stack(ParamBinding<T>& bind, const std::string& prefix,
                                         std::size_t heads);

/// Unmasked multi-head self-attention with output projection; x is n x d.
template <typename T>
Var<T> multi_head_attention(const Var<T>& x, const EncoderLayerParams<T>& p);

template <typename T>
Var<T> encoder_layer(const Var<T>& x, const EncoderLayerParams<T>& p);

/// Sequential layers; an empty stack returns x unchanged.
template <typename T>
Var<T> encoder_stack(const Var<T>& x, const EncoderStackParams<T>& p);

}  // namespace safsar
