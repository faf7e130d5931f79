#pragma once

#include <cstddef>
#include <vector>

#include "safsar/numerics/rng.hpp"

namespace safsar {

/// Clip of frames x height x width x channels intensities in [0, 1], row-major.
struct VideoTensor {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> data;

    VideoTensor() = default;
    VideoTensor(std::size_t t, std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : frames(t), height(h), width(w), channels(c), data(t * h * w * c, fill) {}

    std::size_t frame_size() const { return height * width * channels; }

    float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
        return data[((t * height + y) * width + x) * channels + c];
    }
    float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return data[((t * height + y) * width + x) * channels + c];
    }

    /// Throws ConfigError on empty extents or a data length mismatch, DomainError on
    /// intensities outside [0, 1].
    void validate() const;

    friend bool operator==(const VideoTensor&, const VideoTensor&) = default;
};

/// idx_j = floor(j * available / count), j = 0 .. count-1.
std::vector<std::size_t> frame_indices(std::size_t available, std::size_t count);

/// Uniformly samples `count` frames; repeats frames when the clip is shorter.
VideoTensor sample_frames(const VideoTensor& video, std::size_t count);

VideoTensor crop(const VideoTensor& video, std::size_t top, std::size_t left, std::size_t height,
                 std::size_t width);

VideoTensor center_crop(const VideoTensor& video, std::size_t height, std::size_t width);

VideoTensor flip_horizontal(const VideoTensor& video);

struct AugmentConfig {
    /// Crop extents; 0 keeps the full frame extent.
    std::size_t crop_height = 0;
    std::size_t crop_width = 0;
    double flip_probability = 0.5;
    double jitter_low = 0.8;
    double jitter_high = 1.2;
};

/// Random crop, then horizontal flip with probability `flip_probability`, then a
/// per-channel intensity scale in [jitter_low, jitter_high] clamped to [0, 1].
VideoTensor augment(const VideoTensor& video, const AugmentConfig& config, Rng& rng);

/// Evaluation-time counterpart of augment: a center crop to the configured size.
VideoTensor eval_view(const VideoTensor& video, const AugmentConfig& config);

}  // namespace safsar
