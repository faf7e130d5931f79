#include "safsar/encoders/video.hpp"

#include <algorithm>
#include <string>

#include "safsar/errors.hpp"

namespace safsar {

void VideoTensor::validate() const {
    if (frames == 0 || height == 0 || width == 0 || channels == 0) {
        throw ConfigError("video extents must be positive");
    }
    if (data.size() != frames * height * width * channels) {
        throw ConfigError("video data length does not match its extents");
    }
    for (float v : data) {
        if (!(v >= 0.0f && v <= 1.0f)) throw DomainError("video intensity outside [0, 1]");
    }
}

std::vector<std::size_t> frame_indices(std::size_t available, std::size_t count) {
    if (count == 0) throw DomainError("frame count must be at least 1");
    if (available == 0) throw DomainError("clip has no frames");
    std::vector<std::size_t> idx(count);
    for (std::size_t j = 0; j < count; ++j) idx[j] = j * available / count;
    return idx;
}

VideoTensor sample_frames(const VideoTensor& video, std::size_t count) {
    const auto idx = frame_indices(video.frames, count);
    VideoTensor out(count, video.height, video.width, video.channels);
    const std::size_t fs = video.frame_size();
    for (std::size_t j = 0; j < count; ++j) {
        std::copy_n(video.data.begin() + static_cast<std::ptrdiff_t>(idx[j] * fs), fs,
                    out.data.begin() + static_cast<std::ptrdiff_t>(j * fs));
    }
    return out;
}

VideoTensor crop(const VideoTensor& video, std::size_t top, std::size_t left, std::size_t height,
                 std::size_t width) {
    if (height == 0 || width == 0 || top + height > video.height || left + width > video.width) {
        throw ConfigError("crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                          std::to_string(top) + "," + std::to_string(left) + ") exceeds frame " +
                          std::to_string(video.height) + "x" + std::to_string(video.width));
    }
    VideoTensor out(video.frames, height, width, video.channels);
    for (std::size_t t = 0; t < video.frames; ++t)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                for (std::size_t c = 0; c < video.channels; ++c)
                    out.at(t, y, x, c) = video.at(t, top + y, left + x, c);
    return out;
}

VideoTensor center_crop(const VideoTensor& video, std::size_t height, std::size_t width) {
    if (height > video.height || width > video.width) {
        throw ConfigError("center crop larger than frame");
    }
    return crop(video, (video.height - height) / 2, (video.width - width) / 2, height, width);
}

VideoTensor flip_horizontal(const VideoTensor& video) {
    VideoTensor out = video;
    for (std::size_t t = 0; t < video.frames; ++t)
        for (std::size_t y = 0; y < video.height; ++y)
            for (std::size_t x = 0; x < video.width; ++x)
                for (std::size_t c = 0; c < video.channels; ++c)
                    out.at(t, y, x, c) = video.at(t, y, video.width - 1 - x, c);
    return out;
}

namespace {

std::pair<std::size_t, std::size_t> crop_extent(const VideoTensor& video,
                                                const AugmentConfig& config) {
    const std::size_t h = config.crop_height ? config.crop_height : video.height;
    const std::size_t w = config.crop_width ? config.crop_width : video.width;
    if (h > video.height || w > video.width) {
        throw ConfigError("crop " + std::to_string(h) + "x" + std::to_string(w) +
                          " larger than frame " + std::to_string(video.height) + "x" +
                          std::to_string(video.width));
    }
    return {h, w};
}

}  // namespace

VideoTensor augment(const VideoTensor& video, const AugmentConfig& config, Rng& rng) {
    const auto [h, w] = crop_extent(video, config);
    const std::size_t top = uniform_index(rng, video.height - h + 1);
    const std::size_t left = uniform_index(rng, video.width - w + 1);
    VideoTensor out = crop(video, top, left, h, w);
    if (uniform01(rng) < config.flip_probability) out = flip_horizontal(out);
    for (std::size_t c = 0; c < out.channels; ++c) {
        const auto factor = static_cast<float>(uniform(rng, config.jitter_low, config.jitter_high));
        for (std::size_t i = c; i < out.data.size(); i += out.channels) {
            out.data[i] = std::clamp(out.data[i] * factor, 0.0f, 1.0f);
        }
    }
    return out;
}

VideoTensor eval_view(const VideoTensor& video, const AugmentConfig& config) {
    const auto [h, w] = crop_extent(video, config);
    if (h == video.height && w == video.width) return video;
    return center_crop(video, h, w);
}

}  // namespace safsar
