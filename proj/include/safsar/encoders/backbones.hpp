#pragma once

// Toy backbones. The video encoder turns a clip into one d-vector:
// space-time tubelets -> linear embedding -> + sinusoidal positions ->
// encoder stack -> mean over tokens. The text encoder maps a token sequence
// to an L x d matrix with the same recipe minus the pooling, and is frozen.

#include "safsar/encoders/text.hpp"
#include "safsar/encoders/video.hpp"
#include "safsar/transformer/encoder.hpp"

namespace safsar {

struct VideoEncoderConfig {
    EncoderShape shape{};
    std::size_t depth = 4;
    std::size_t tubelet_frames = 2;
    std::size_t tubelet_height = 4;
    std::size_t tubelet_width = 4;
    std::size_t channels = 1;
    /// Encoder layers frozen on top of the (always frozen) patch embedding.
    std::size_t freeze_depth = 0;

    std::size_t patch_dim() const {
        return tubelet_frames * tubelet_height * tubelet_width * channels;
    }
    void validate() const;
};

struct TextEncoderConfig {
    EncoderShape shape{};
    std::size_t depth = 2;
    std::size_t vocab_size = 0;

    void validate() const;
};

template <typename T>
void init_video_encoder(ParamStore<T>& store, const VideoEncoderConfig& config, std::uint64_t seed);

/// Freezes the patch embedding plus the first `config.freeze_depth` layers; unfreezes the rest.
template <typename T>
void apply_video_freezing(ParamStore<T>& store, const VideoEncoderConfig& config);

/// Random token table and stack, every tensor frozen.
template <typename T>
void init_text_encoder(ParamStore<T>& store, const TextEncoderConfig& config, std::uint64_t seed);

/// Tubelet matrix (tokens x patch_dim); tokens ordered by (t, y, x) block index and
/// each row laid out as (dt, dy, dx, channel).
template <typename T>
Tensor<T> tubelet_tokens(const VideoTensor& video, const VideoEncoderConfig& config);

/// Fixed sinusoidal codes: even columns sin(p / 10000^(2i/d)), odd columns cos.
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t count, std::size_t dim);

/// Feature vector f of shape {d}.
template <typename T>
Var<T> video_encode(ParamBinding<T>& bind, const VideoTensor& video,
                    const VideoEncoderConfig& config);

/// Token features s of shape {L, d}.
template <typename T>
Var<T> text_encode(ParamBinding<T>& bind, const TokenSequence& tokens,
                   const TextEncoderConfig& config);

}  // namespace safsar
