#include "safsar/encoders/backbones.hpp"

#include <cmath>

namespace safsar {

void VideoEncoderConfig::validate() const {
    shape.validate();
    if (tubelet_frames == 0 || tubelet_height == 0 || tubelet_width == 0 || channels == 0) {
        throw ConfigError("tubelet extents and channel count must be positive");
    }
    if (freeze_depth > depth) {
        throw ConfigError("freeze depth " + std::to_string(freeze_depth) +
                          " exceeds video encoder depth " + std::to_string(depth));
    }
}

void TextEncoderConfig::validate() const {
    shape.validate();
    if (vocab_size < 2) throw ConfigError("text encoder needs a vocabulary with UNK and PAD");
}

template <typename T>
void init_video_encoder(ParamStore<T>& store, const VideoEncoderConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t d = config.shape.dim;
    store.add("video.patch_embed.w", glorot_uniform<T>(config.patch_dim(), d, seed, "video.patch_embed.w"));
    store.add("video.patch_embed.b", Tensor<T>({d}));
    init_encoder_stack(store, "video", config.shape, config.depth, seed);
    apply_video_freezing(store, config);
}

template <typename T>
void apply_video_freezing(ParamStore<T>& store, const VideoEncoderConfig& config) {
    config.validate();
    store.set_frozen_prefix("video.", false);
    store.set_frozen_prefix("video.patch_embed.", true);
    for (std::size_t i = 0; i < config.freeze_depth; ++i) {
        store.set_frozen_prefix("video.layer" + std::to_string(i) + ".", true);
    }
}

template <typename T>
void init_text_encoder(ParamStore<T>& store, const TextEncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, "text.token_embed"));
    Tensor<T> table({config.vocab_size, config.shape.dim});
    for (auto& e : table.values()) e = static_cast<T>(uniform(rng, -1.0, 1.0));
    store.add("text.token_embed", std::move(table), true);
    init_encoder_stack(store, "text", config.shape, config.depth, seed, true);
}

template <typename T>
Tensor<T> tubelet_tokens(const VideoTensor& video, const VideoEncoderConfig& config) {
    const std::size_t tt = config.tubelet_frames, th = config.tubelet_height,
                      tw = config.tubelet_width;
    if (video.channels != config.channels) {
        throw ConfigError("clip has " + std::to_string(video.channels) +
                          " channels, encoder expects " + std::to_string(config.channels));
    }
    if (video.frames % tt != 0 || video.height % th != 0 || video.width % tw != 0 ||
        video.frames == 0 || video.height == 0 || video.width == 0) {
        throw ConfigError("clip " + std::to_string(video.frames) + "x" +
                          std::to_string(video.height) + "x" + std::to_string(video.width) +
                          " is not divisible by tubelet " + std::to_string(tt) + "x" +
                          std::to_string(th) + "x" + std::to_string(tw));
    }
    const std::size_t nt = video.frames / tt, nh = video.height / th, nw = video.width / tw;
    const std::size_t ch = video.channels;
    Tensor<T> tokens({nt * nh * nw, config.patch_dim()});
    std::size_t token = 0;
    for (std::size_t bt = 0; bt < nt; ++bt)
        for (std::size_t by = 0; by < nh; ++by)
            for (std::size_t bx = 0; bx < nw; ++bx, ++token) {
                auto row = tokens.row(token);
                std::size_t k = 0;
                for (std::size_t dt = 0; dt < tt; ++dt)
                    for (std::size_t dy = 0; dy < th; ++dy)
                        for (std::size_t dx = 0; dx < tw; ++dx)
                            for (std::size_t c = 0; c < ch; ++c)
                                row[k++] = static_cast<T>(
                                    video.at(bt * tt + dt, by * th + dy, bx * tw + dx, c));
            }
    return tokens;
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t count, std::size_t dim) {
    Tensor<T> pe({count, dim});
    for (std::size_t p = 0; p < count; ++p)
        for (std::size_t j = 0; j < dim; ++j) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(dim));
            const double angle = static_cast<double>(p) * rate;
            pe(p, j) = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

template <typename T>
Var<T> video_encode(ParamBinding<T>& bind, const VideoTensor& video,
                    const VideoEncoderConfig& config) {
    Tape<T>& tape = bind.tape();
    Tensor<T> patches = tubelet_tokens<T>(video, config);
    const std::size_t n = patches.rows();
    Var<T> x = tape.constant(std::move(patches));
    Var<T> embedded = add_row(matmul(x, bind("video.patch_embed.w")), bind("video.patch_embed.b"));
    Var<T> tokens = add(embedded, tape.constant(sinusoidal_positions<T>(n, config.shape.dim)));
    Var<T> encoded = encoder_stack(tokens, bind_encoder_stack(bind, "video", config.shape.heads));
    return mean_rows(encoded);
}

template <typename T>
Var<T> text_encode(ParamBinding<T>& bind, const TokenSequence& tokens,
                   const TextEncoderConfig& config) {
    if (tokens.ids.empty()) throw DomainError("text_encode needs at least one token");
    for (std::size_t id : tokens.ids) {
        if (id >= config.vocab_size) {
            throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(config.vocab_size));
        }
    }
    Tape<T>& tape = bind.tape();
    Var<T> embedded = gather_rows(bind("text.token_embed"), std::span<const std::size_t>(tokens.ids));
    Var<T> x = add(embedded, tape.constant(sinusoidal_positions<T>(tokens.length(), config.shape.dim)));
    return encoder_stack(x, bind_encoder_stack(bind, "text", config.shape.heads));
}

#define SAFSAR_INSTANTIATE_BACKBONES(T)                                                        \
    template void init_video_encoder<T>(ParamStore<T>&, const VideoEncoderConfig&, std::uint64_t); \
    template void apply_video_freezing<T>(ParamStore<T>&, const VideoEncoderConfig&);          \
    template void init_text_encoder<T>(ParamStore<T>&, const TextEncoderConfig&, std::uint64_t); \
    template Tensor<T> tubelet_tokens<T>(const VideoTensor&, const VideoEncoderConfig&);       \
    template Tensor<T> sinusoidal_positions<T>(std::size_t, std::size_t);                      \
    template Var<T> video_encode<T>(ParamBinding<T>&, const VideoTensor&,                      \
                                    const VideoEncoderConfig&);                                \
    template Var<T> text_encode<T>(ParamBinding<T>&, const TokenSequence&,                     \
                                   const TextEncoderConfig&);

SAFSAR_INSTANTIATE_BACKBONES(float)
SAFSAR_INSTANTIATE_BACKBONES(double)

}  // namespace safsar
