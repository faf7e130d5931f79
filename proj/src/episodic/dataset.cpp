#include "safsar/episodic/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "safsar/errors.hpp"

namespace safsar {

std::string_view split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

void Dataset::validate() const {
    std::set<std::size_t> ids;
    for (const auto& c : classes) {
        // a class listed twice could straddle two splits
        if (!ids.insert(c.id).second) {
            throw ContractError("class " + std::to_string(c.id) + " listed more than once");
        }
    }
    std::set<std::string> item_ids;
    for (const auto& item : items) {
        if (!item_ids.insert(item.id).second) throw ContractError("duplicate item id '" + item.id + "'");
        if (!ids.contains(item.class_id)) {
            throw ContractError("item '" + item.id + "' references unknown class " +
                                std::to_string(item.class_id));
        }
    }
    if (kind == Kind::clips) {
        if (clips.size() != items.size()) throw ContractError("clip list does not match item list");
    } else {
        if (features.size() != items.size()) throw ContractError("feature list does not match item list");
        if (feature_dim == 0) throw ContractError("feature dataset with zero dimension");
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (features[i].size() != feature_dim) {
                throw ContractError("feature of item '" + items[i].id + "' has " +
                                    std::to_string(features[i].size()) + " entries, expected " +
                                    std::to_string(feature_dim));
            }
        }
        for (const auto& [cls, t] : text_features) {
            if (!ids.contains(cls)) throw ContractError("text features for unknown class " + std::to_string(cls));
            if (t.rank() != 2 || t.cols() != feature_dim) {
                throw ContractError("text features of class " + std::to_string(cls) +
                                    " have shape " + shape_str(t.shape()));
            }
        }
    }
}

const ClassInfo& Dataset::class_info(std::size_t class_id) const {
    for (const auto& c : classes) {
        if (c.id == class_id) return c;
    }
    throw ContractError("unknown class " + std::to_string(class_id));
}

std::vector<std::size_t> Dataset::split_classes(Split split) const {
    std::vector<std::size_t> out;
    for (const auto& c : classes) {
        if (c.split == split) out.push_back(c.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

SplitView SplitView::of(const Dataset& data, Split split) {
    SplitView view;
    view.split = split;
    view.classes = data.split_classes(split);
    view.items.resize(view.classes.size());
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        auto it = std::lower_bound(view.classes.begin(), view.classes.end(), data.items[i].class_id);
        if (it != view.classes.end() && *it == data.items[i].class_id) {
            view.items[static_cast<std::size_t>(it - view.classes.begin())].push_back(i);
        }
    }
    return view;
}

std::size_t SplitView::item_count() const {
    std::size_t n = 0;
    for (const auto& v : items) n += v.size();
    return n;
}

void check_capacity(const SplitView& view, std::size_t ways, std::size_t shots) {
    if (ways == 0 || shots == 0) throw ConfigError("episodes need N >= 1 and K >= 1");
    const std::string where = std::string(split_name(view.split)) + " split";
    if (view.classes.size() < ways) {
        throw CapacityError(where + " has " + std::to_string(view.classes.size()) +
                            " classes, a " + std::to_string(ways) + "-way episode needs " +
                            std::to_string(ways) + " (short by " +
                            std::to_string(ways - view.classes.size()) + ")");
    }
    for (std::size_t c = 0; c < view.classes.size(); ++c) {
        if (view.items[c].size() < shots + 1) {
            throw CapacityError(where + ": class " + std::to_string(view.classes[c]) + " has " +
                                std::to_string(view.items[c].size()) + " items, " +
                                std::to_string(shots) + "-shot episodes need " +
                                std::to_string(shots + 1) + " (short by " +
                                std::to_string(shots + 1 - view.items[c].size()) + ")");
        }
    }
}

Episode sample_episode(const SplitView& view, std::size_t ways, std::size_t shots, Rng& rng,
                       std::size_t index) {
    check_capacity(view, ways, shots);
    // partial Fisher-Yates over class slots
    std::vector<std::size_t> slots(view.classes.size());
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    for (std::size_t i = 0; i < ways; ++i) {
        const auto j = i + uniform_index(rng, slots.size() - i);
        std::swap(slots[i], slots[j]);
    }
    slots.resize(ways);
    std::sort(slots.begin(), slots.end());

    Episode ep;
    ep.index = index;
    const std::size_t query_slot = slots[uniform_index(rng, ways)];
    for (std::size_t slot : slots) {
        const std::size_t cls = view.classes[slot];
        ep.classes.push_back(cls);
        std::vector<std::size_t> pool = view.items[slot];
        const std::size_t take = shots + (slot == query_slot ? 1 : 0);
        for (std::size_t i = 0; i < take; ++i) {
            const auto j = i + uniform_index(rng, pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        for (std::size_t i = 0; i < shots; ++i) ep.support.push_back({pool[i], cls});
        if (slot == query_slot) ep.query = {pool[shots], cls};
    }
    return ep;
}

void SynthSpec::validate() const {
    if (classes < 4) throw ConfigError("synthetic dataset needs at least 4 classes");
    if (classes > motion_programs().size()) {
        throw ConfigError("synthetic dataset supports at most " +
                          std::to_string(motion_programs().size()) + " classes");
    }
    if (items_per_class < 2) throw ConfigError("synthetic dataset needs at least 2 items per class");
    if (frames < 2 || height < 4 || width < 4) {
        throw ConfigError("degenerate synthetic clip shape " + std::to_string(frames) + "x" +
                          std::to_string(height) + "x" + std::to_string(width));
    }
    if (train_classes == 0 || train_classes + val_classes >= classes) {
        throw ConfigError("synthetic splits need at least one train and one test class");
    }
    if (!(noise >= 0.0) || !(blob_sigma > 0.0)) throw ConfigError("invalid synthetic noise or blob size");
}

const std::vector<MotionProgram>& motion_programs() {
    static const std::vector<MotionProgram> programs = [] {
        const char* directions[] = {"right", "up-right", "up", "up-left",
                                    "left", "down-left", "down", "down-right"};
        // fraction of the smaller frame extent travelled over the whole clip
        const std::pair<const char*, double> speeds[] = {{"slow", 0.25}, {"steady", 0.45}, {"fast", 0.7}};
        std::vector<MotionProgram> out;
        for (const auto& [speed_name, speed] : speeds) {
            for (int k = 0; k < 8; ++k) {
                const double angle = k * std::numbers::pi / 4.0;
                out.push_back({directions[k], speed_name, std::cos(angle), -std::sin(angle), speed});
            }
        }
        return out;
    }();
    return programs;
}

namespace {

VideoTensor render_clip(const SynthSpec& spec, const MotionProgram& prog, Rng& rng) {
    VideoTensor clip(spec.frames, spec.height, spec.width, 1);
    const double extent = static_cast<double>(std::min(spec.height, spec.width));
    const double travel = prog.speed * extent * uniform(rng, 0.95, 1.05);
    const double step = travel / static_cast<double>(spec.frames - 1);
    const double cx0 = (static_cast<double>(spec.width) - 1.0) / 2.0 - prog.dx * travel / 2.0 +
                       uniform(rng, -1.0, 1.0);
    const double cy0 = (static_cast<double>(spec.height) - 1.0) / 2.0 - prog.dy * travel / 2.0 +
                       uniform(rng, -1.0, 1.0);
    const double inv2s2 = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const double cx = cx0 + prog.dx * step * static_cast<double>(t);
        const double cy = cy0 + prog.dy * step * static_cast<double>(t);
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double rx = static_cast<double>(x) - cx, ry = static_cast<double>(y) - cy;
                const double v = 0.1 + uniform(rng, -spec.noise, spec.noise) +
                                 0.85 * std::exp(-(rx * rx + ry * ry) * inv2s2);
                clip.at(t, y, x, 0) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    }
    return clip;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec) {
    spec.validate();
    const auto& programs = motion_programs();
    std::vector<std::size_t> order(programs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng assign(derive_seed(spec.seed, "synth.assign"));
    shuffle(order.begin(), order.end(), assign);

    Dataset data;
    data.kind = Dataset::Kind::clips;
    const std::uint64_t item_seed = derive_seed(spec.seed, "synth.items");
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const MotionProgram& prog = programs[order[c]];
        const Split split = c < spec.train_classes                     ? Split::train
                            : c < spec.train_classes + spec.val_classes ? Split::val
                                                                        : Split::test;
        data.classes.push_back(
            {c, "a blob moving " + prog.direction + " at " + prog.speed_name + " pace", split});
        for (std::size_t i = 0; i < spec.items_per_class; ++i) {
            Rng rng(derive_seed(item_seed, c * spec.items_per_class + i));
            data.items.push_back({"class" + std::to_string(c) + "-item" + std::to_string(i), c});
            data.clips.push_back(render_clip(spec, prog, rng));
        }
    }
    data.validate();
    return data;
}

std::array<double, 2> centroid_motion(const VideoTensor& clip, float threshold) {
    std::vector<std::array<double, 2>> centres;
    std::vector<bool> present;
    for (std::size_t t = 0; t < clip.frames; ++t) {
        double w = 0.0, sx = 0.0, sy = 0.0;
        for (std::size_t y = 0; y < clip.height; ++y)
            for (std::size_t x = 0; x < clip.width; ++x) {
                double v = 0.0;
                for (std::size_t c = 0; c < clip.channels; ++c) v += clip.at(t, y, x, c);
                v /= static_cast<double>(clip.channels);
                if (v > threshold) {
                    const double m = v - threshold;
                    w += m;
                    sx += m * static_cast<double>(x);
                    sy += m * static_cast<double>(y);
                }
            }
        present.push_back(w > 0.0);
        centres.push_back(w > 0.0 ? std::array<double, 2>{sx / w, sy / w} : std::array<double, 2>{0, 0});
    }
    std::array<double, 2> sum{0.0, 0.0};
    std::size_t n = 0;
    for (std::size_t t = 1; t < clip.frames; ++t) {
        if (present[t] && present[t - 1]) {
            sum[0] += centres[t][0] - centres[t - 1][0];
            sum[1] += centres[t][1] - centres[t - 1][1];
            ++n;
        }
    }
    if (n == 0) return {0.0, 0.0};
    return {sum[0] / static_cast<double>(n), sum[1] / static_cast<double>(n)};
}

double nearest_centroid_accuracy(const Dataset& data) {
    if (data.kind != Dataset::Kind::clips || data.items.empty()) {
        throw ContractError("nearest-centroid statistic needs a non-empty clip dataset");
    }
    std::vector<std::array<double, 2>> stats;
    std::map<std::size_t, std::array<double, 3>> acc;  // sum x, sum y, count
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        stats.push_back(centroid_motion(data.clips[i]));
        auto& a = acc[data.items[i].class_id];
        a[0] += stats.back()[0];
        a[1] += stats.back()[1];
        a[2] += 1.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& [cls, a] : acc) {
            const double mx = a[0] / a[2] - stats[i][0], my = a[1] / a[2] - stats[i][1];
            const double d = mx * mx + my * my;
            if (d < best_d) {
                best_d = d;
                best = cls;
            }
        }
        if (best == data.items[i].class_id) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.items.size());
}

}  // namespace safsar
