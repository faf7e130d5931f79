#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "safsar/encoders/video.hpp"
#include "safsar/numerics/tensor.hpp"

namespace safsar {

enum class Split { train, val, test };

std::string_view split_name(Split split);
/// Throws ConfigError for anything but "train", "val", "test".
Split parse_split(std::string_view name);

struct ClassInfo {
    std::size_t id = 0;
    std::string description;
    Split split = Split::train;
};

struct Item {
    std::string id;
    std::size_t class_id = 0;
};

/// Items of one kind: raw clips or precomputed d-dimensional features.
/// `clips` / `features` are aligned with `items`; only the one matching `kind` is filled.
struct Dataset {
    enum class Kind { clips, features };

    Kind kind = Kind::clips;
    std::vector<ClassInfo> classes;
    std::vector<Item> items;
    std::vector<VideoTensor> clips;
    std::vector<std::vector<float>> features;
    std::size_t feature_dim = 0;
    /// Optional per-class token features (L x d), feature datasets only.
    std::map<std::size_t, Tensor<float>> text_features;

    /// Unique class ids, unique item ids, items referencing known classes,
    /// payload aligned with the item list. Throws ContractError.
    void validate() const;

    const ClassInfo& class_info(std::size_t class_id) const;
    /// Sorted class ids in a split.
    std::vector<std::size_t> split_classes(Split split) const;
    std::size_t class_count() const noexcept { return classes.size(); }
};

/// Items of one split grouped by class, both in ascending order.
struct SplitView {
    Split split = Split::train;
    std::vector<std::size_t> classes;
    std::vector<std::vector<std::size_t>> items;  // item indices, aligned with classes

    static SplitView of(const Dataset& data, Split split);
    std::size_t item_count() const;
};

/// One N-way K-shot task with a single query.
struct Episode {
    std::size_t index = 0;
    std::vector<std::size_t> classes;  // C_e, ascending
    struct Ref {
        std::size_t item = 0;
        std::size_t class_id = 0;
    };
    std::vector<Ref> support;  // grouped by class in ascending order, K each
    Ref query;
};

/// Throws CapacityError unless the split has >= ways classes, each with >= shots + 1 items.
void check_capacity(const SplitView& view, std::size_t ways, std::size_t shots);

/// N classes uniformly without replacement, K supports per class without
/// replacement, query from the rest of a uniformly chosen episode class.
Episode sample_episode(const SplitView& view, std::size_t ways, std::size_t shots, Rng& rng,
                       std::size_t index = 0);

/// Synthetic motion dataset: each class is a blob moving in one of 8 directions
/// at one of 3 speeds over a noisy background.
struct SynthSpec {
    std::size_t classes = 22;
    std::size_t items_per_class = 20;
    std::size_t frames = 16;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t train_classes = 12;
    std::size_t val_classes = 5;  // remaining classes go to test
    double noise = 0.04;
    double blob_sigma = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset synth_generate(const SynthSpec& spec);

/// Program of a synthetic class: unit direction and speed in pixels per frame.
struct MotionProgram {
    std::string direction;
    std::string speed_name;
    double dx = 0.0;
    double dy = 0.0;
    double speed = 0.0;
};

/// Motion programs in generation order (8 directions x 3 speeds).
const std::vector<MotionProgram>& motion_programs();

/// Mean per-frame displacement of the bright-pixel centroid (x, y).
std::array<double, 2> centroid_motion(const VideoTensor& clip, float threshold = 0.4f);

/// Leave-in nearest-centroid accuracy of centroid_motion over all items.
double nearest_centroid_accuracy(const Dataset& data);

}  // namespace safsar
