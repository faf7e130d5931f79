#include "safsar/cache/cache_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "detail.hpp"
#include "safsar/errors.hpp"

namespace safsar::cache {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::get_le;
using detail::put_le;
using detail::read_file;
using detail::write_atomic;

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

float get_float(const char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }

// 20 + 4 n d, or nullopt on overflow.
std::optional<std::uint64_t> expected_length(std::uint64_t count, std::uint32_t dim) {
    const std::uint64_t width = 4ULL * dim;
    if (width != 0 && count > (UINT64_MAX - kHeaderBytes) / width) return std::nullopt;
    return kHeaderBytes + count * width;
}

template <typename V>
V field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw CacheCorruptionError(std::string("manifest field '") + key + "' is missing");
    }
    try {
        return j.at(key).get<V>();
    } catch (const json::exception&) {
        throw CacheCorruptionError(std::string("manifest field '") + key + "' has the wrong type");
    }
}

Manifest read_manifest(const fs::path& path) {
    std::vector<char> bytes = read_file(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw CacheCorruptionError("manifest " + path.string() + " is not valid JSON");
    return manifest_from_json(j);
}

}  // namespace

json manifest_to_json(const Manifest& m) {
    json j;
    j["format"] = kFormatName;
    j["version"] = m.version;
    j["dim"] = m.dim;
    j["blob"] = m.blob;
    j["record_count"] = m.record_count;
    j["record_kind"] = m.record_kind;
    if (m.record_kind == "clip") j["clip_shape"] = m.clip_shape;
    j["classes"] = json::array();
    for (const auto& c : m.classes) {
        j["classes"].push_back({{"id", c.id},
                                {"description", c.description},
                                {"split", split_name(c.split)},
                                {"text_offset", c.text_offset ? json(*c.text_offset) : json(nullptr)},
                                {"text_rows", c.text_rows}});
    }
    j["items"] = json::array();
    for (const auto& it : m.items) {
        j["items"].push_back({{"id", it.id}, {"class", it.class_id}, {"offset", it.offset}});
    }
    return j;
}

Manifest manifest_from_json(const json& j) {
    if (!j.is_object()) throw NotACacheError("manifest is not a JSON object");
    if (!j.contains("format") || j["format"] != kFormatName) {
        throw NotACacheError("manifest format is not '" + std::string(kFormatName) + "'");
    }
    Manifest m;
    m.version = field<std::uint32_t>(j, "version");
    if (m.version != kVersion) {
        throw CacheVersionError("manifest version " + std::to_string(m.version) +
                                " is not supported (expected " + std::to_string(kVersion) + ")");
    }
    m.dim = field<std::uint32_t>(j, "dim");
    m.blob = field<std::string>(j, "blob");
    m.record_count = field<std::uint64_t>(j, "record_count");
    m.record_kind = field<std::string>(j, "record_kind");
    if (m.record_kind != "feature" && m.record_kind != "clip") {
        throw CacheCorruptionError("unknown record kind '" + m.record_kind + "'");
    }
    if (m.record_kind == "clip") m.clip_shape = field<std::array<std::size_t, 4>>(j, "clip_shape");
    for (const auto& c : field<json>(j, "classes")) {
        ClassEntry e;
        e.id = field<std::size_t>(c, "id");
        e.description = field<std::string>(c, "description");
        try {
            e.split = parse_split(field<std::string>(c, "split"));
        } catch (const ConfigError& err) {
            throw CacheCorruptionError(err.what());
        }
        if (c.contains("text_offset") && !c["text_offset"].is_null()) {
            e.text_offset = field<std::uint64_t>(c, "text_offset");
        }
        e.text_rows = c.contains("text_rows") ? field<std::uint64_t>(c, "text_rows") : 0;
        m.classes.push_back(std::move(e));
    }
    for (const auto& it : field<json>(j, "items")) {
        m.items.push_back({field<std::string>(it, "id"), field<std::size_t>(it, "class"),
                           field<std::uint64_t>(it, "offset")});
    }
    return m;
}

std::vector<char> encode_blob(const BlobHeader& header, std::span<const float> payload) {
    if (payload.size() != header.count * header.dim) {
        throw ContractError("blob payload has " + std::to_string(payload.size()) + " floats, header declares " +
                            std::to_string(header.count) + " x " + std::to_string(header.dim));
    }
    std::vector<char> out(kMagic.begin(), kMagic.end());
    out.reserve(kHeaderBytes + 4 * payload.size());
    put_le(out, header.version);
    put_le(out, header.dim);
    put_le(out, header.count);
    for (float f : payload) put_le(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

BlobHeader decode_header(std::span<const char> bytes) {
    if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw NotACacheError("missing SFSR magic bytes");
    }
    if (bytes.size() < kHeaderBytes) {
        throw CacheCorruptionError("header truncated: " + std::to_string(bytes.size()) + " of " +
                                   std::to_string(kHeaderBytes) + " bytes");
    }
    BlobHeader h;
    h.version = get_le<std::uint32_t>(bytes.data() + 4);
    h.dim = get_le<std::uint32_t>(bytes.data() + 8);
    h.count = get_le<std::uint64_t>(bytes.data() + 12);
    if (h.version != kVersion) {
        throw CacheVersionError("blob version " + std::to_string(h.version) + " is not supported (expected " +
                                std::to_string(kVersion) + ")");
    }
    const auto expected = expected_length(h.count, h.dim);
    if (!expected || *expected != bytes.size()) {
        throw CacheCorruptionError(
            "blob length mismatch: expected " + (expected ? std::to_string(*expected) : std::string("overflow")) +
            " bytes for " + std::to_string(h.count) + " records of width " + std::to_string(h.dim) +
            ", actual " + std::to_string(bytes.size()));
    }
    return h;
}

fs::path blob_path(const fs::path& manifest_path, const Manifest& m) {
    return manifest_path.parent_path() / m.blob;
}

void write_cache(const Dataset& data, const fs::path& manifest_path) {
    data.validate();
    Manifest m;
    std::vector<float> payload;
    if (data.kind == Dataset::Kind::features) {
        m.record_kind = "feature";
        m.dim = static_cast<std::uint32_t>(data.feature_dim);
        for (const auto& f : data.features) payload.insert(payload.end(), f.begin(), f.end());
    } else {
        m.record_kind = "clip";
        if (!data.clips.empty()) {
            const auto& c0 = data.clips.front();
            m.clip_shape = {c0.frames, c0.height, c0.width, c0.channels};
            for (const auto& c : data.clips) {
                if (c.frames != c0.frames || c.height != c0.height || c.width != c0.width ||
                    c.channels != c0.channels) {
                    throw ContractError("clip cache needs every clip to share one shape");
                }
                payload.insert(payload.end(), c.data.begin(), c.data.end());
            }
            const std::size_t width = c0.data.size();
            if (width > UINT32_MAX) throw ContractError("clip too large for the cache record width");
            m.dim = static_cast<std::uint32_t>(width);
        }
    }
    std::uint64_t record = 0;
    for (const auto& item : data.items) m.items.push_back({item.id, item.class_id, record++});
    for (const auto& c : data.classes) {
        ClassEntry e{c.id, c.description, c.split, std::nullopt, 0};
        auto t = data.text_features.find(c.id);
        if (t != data.text_features.end()) {
            e.text_offset = record;
            e.text_rows = t->second.rows();
            record += e.text_rows;
            payload.insert(payload.end(), t->second.values().begin(), t->second.values().end());
        }
        m.classes.push_back(std::move(e));
    }
    m.record_count = record;
    m.blob = manifest_path.stem().string() + ".bin";

    const auto blob = encode_blob({kVersion, m.dim, m.record_count}, payload);
    write_atomic(blob_path(manifest_path, m), blob);
    const std::string text = manifest_to_json(m).dump(2) + "\n";
    write_atomic(manifest_path, std::span<const char>(text.data(), text.size()));
}

Dataset read_cache(const fs::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    const auto bytes = read_file(blob_path(manifest_path, m));
    const BlobHeader h = decode_header(bytes);
    if (h.dim != m.dim || h.count != m.record_count) {
        throw CacheCorruptionError("blob header (" + std::to_string(h.count) + " x " + std::to_string(h.dim) +
                                   ") disagrees with manifest (" + std::to_string(m.record_count) + " x " +
                                   std::to_string(m.dim) + ")");
    }
    if (m.dim == 0 && !m.items.empty()) throw CacheCorruptionError("zero record width with items present");
    const std::size_t width = m.dim;
    auto record = [&](std::uint64_t index) {
        std::vector<float> v(width);
        const char* p = bytes.data() + kHeaderBytes + index * 4 * width;
        for (std::size_t i = 0; i < width; ++i) v[i] = get_float(p + 4 * i);
        return v;
    };

    Dataset data;
    for (const auto& c : m.classes) data.classes.push_back({c.id, c.description, c.split});
    if (m.record_kind == "feature") {
        data.kind = Dataset::Kind::features;
        data.feature_dim = width;
    } else {
        data.kind = Dataset::Kind::clips;
        const auto& s = m.clip_shape;
        if (s[0] * s[1] * s[2] * s[3] != width) {
            throw CacheCorruptionError("clip shape does not match record width " + std::to_string(width));
        }
    }
    for (const auto& it : m.items) {
        if (it.offset >= h.count) {
            throw CacheCorruptionError("item '" + it.id + "' offset " + std::to_string(it.offset) +
                                       " beyond " + std::to_string(h.count) + " records");
        }
        data.items.push_back({it.id, it.class_id});
        if (data.kind == Dataset::Kind::features) {
            data.features.push_back(record(it.offset));
        } else {
            const auto& s = m.clip_shape;
            VideoTensor clip(s[0], s[1], s[2], s[3]);
            clip.data = record(it.offset);
            data.clips.push_back(std::move(clip));
        }
    }
    for (const auto& c : m.classes) {
        if (!c.text_offset) continue;
        if (data.kind != Dataset::Kind::features) throw CacheCorruptionError("clip caches cannot carry text rows");
        if (c.text_rows == 0 || *c.text_offset > h.count || c.text_rows > h.count - *c.text_offset) {
            throw CacheCorruptionError("text rows of class " + std::to_string(c.id) + " fall outside the blob");
        }
        Tensor<float> t({static_cast<std::size_t>(c.text_rows), width});
        for (std::uint64_t r = 0; r < c.text_rows; ++r) {
            auto row = record(*c.text_offset + r);
            std::copy(row.begin(), row.end(), t.row(static_cast<std::size_t>(r)).begin());
        }
        data.text_features.emplace(c.id, std::move(t));
    }
    try {
        data.validate();
    } catch (const ContractError& e) {
        throw CacheCorruptionError(std::string("inconsistent manifest: ") + e.what());
    }
    return data;
}

json validate_cache(const fs::path& manifest_path) {
    json report;
    report["manifest"] = manifest_path.string();
    json violations = json::array();
    auto violate = [&](const std::string& kind, const std::string& detail, json extra = json::object()) {
        extra["kind"] = kind;
        extra["detail"] = detail;
        violations.push_back(std::move(extra));
    };
    auto finish = [&]() {
        report["violations"] = violations;
        report["valid"] = violations.empty();
        return report;
    };
    auto error_kind = [](const std::exception& e) -> std::string {
        if (dynamic_cast<const NotACacheError*>(&e)) return "not_a_cache";
        if (dynamic_cast<const CacheVersionError*>(&e)) return "version";
        if (dynamic_cast<const CacheIoError*>(&e)) return "io";
        return "corruption";
    };

    Manifest m;
    try {
        m = read_manifest(manifest_path);
    } catch (const std::exception& e) {
        violate(error_kind(e), e.what());
        return finish();
    }
    const fs::path blob = blob_path(manifest_path, m);
    report["blob"] = blob.string();
    std::vector<char> bytes;
    BlobHeader h;
    try {
        bytes = read_file(blob);
        h = decode_header(bytes);
    } catch (const std::exception& e) {
        violate(error_kind(e), e.what());
        return finish();
    }
    report["header"] = {{"magic", std::string(kMagic.begin(), kMagic.end())},
                        {"version", h.version},
                        {"dim", h.dim},
                        {"record_count", h.count},
                        {"file_length", bytes.size()}};
    report["record_count"] = h.count;
    report["record_kind"] = m.record_kind;
    if (h.dim != m.dim) {
        violate("header_mismatch", "blob dim " + std::to_string(h.dim) + " vs manifest " + std::to_string(m.dim));
    }
    if (h.count != m.record_count) {
        violate("header_mismatch", "blob record count " + std::to_string(h.count) + " vs manifest " +
                                       std::to_string(m.record_count));
    }

    std::map<std::size_t, std::set<std::string>> splits_of;
    for (const auto& c : m.classes) splits_of[c.id].insert(std::string(split_name(c.split)));
    for (const auto& [id, splits] : splits_of) {
        if (splits.size() > 1) {
            violate("split_overlap", "class " + std::to_string(id) + " appears in several splits",
                    {{"class", id}, {"splits", splits}});
        }
    }
    std::map<std::size_t, std::size_t> counted_classes;
    for (const auto& c : m.classes) ++counted_classes[c.id];
    for (const auto& [id, n] : counted_classes) {
        if (n > 1 && splits_of[id].size() == 1) {
            violate("duplicate_class", "class " + std::to_string(id) + " listed " + std::to_string(n) + " times",
                    {{"class", id}});
        }
    }

    auto scan = [&](std::uint64_t first, std::uint64_t rows) {
        const char* p = bytes.data() + kHeaderBytes + first * 4ULL * h.dim;
        for (std::uint64_t i = 0; i < rows * h.dim; ++i) {
            if (!std::isfinite(get_float(p + 4 * i))) return false;
        }
        return true;
    };

    json nonfinite_items = json::array();
    json class_counts = json::object();
    json split_counts = json::object();
    std::set<std::string> item_ids;
    for (const auto& it : m.items) {
        if (!item_ids.insert(it.id).second) violate("duplicate_item", "item id '" + it.id + "' repeats", {{"item", it.id}});
        if (!splits_of.contains(it.class_id)) {
            violate("unknown_class", "item '" + it.id + "' references class " + std::to_string(it.class_id),
                    {{"item", it.id}});
        } else {
            const std::string key = std::to_string(it.class_id);
            class_counts[key] = class_counts.value(key, 0) + 1;
            const std::string split = *splits_of[it.class_id].begin();
            split_counts[split] = split_counts.value(split, 0) + 1;
        }
        if (it.offset >= h.count) {
            violate("offset_out_of_bounds", "item '" + it.id + "' offset " + std::to_string(it.offset),
                    {{"item", it.id}});
        } else if (!scan(it.offset, 1)) {
            nonfinite_items.push_back(it.id);
            violate("non_finite", "item '" + it.id + "' holds NaN or Inf", {{"item", it.id}});
        }
    }
    json nonfinite_text = json::array();
    for (const auto& c : m.classes) {
        if (!c.text_offset) continue;
        if (c.text_rows == 0 || *c.text_offset > h.count || c.text_rows > h.count - *c.text_offset) {
            violate("offset_out_of_bounds", "text rows of class " + std::to_string(c.id), {{"class", c.id}});
        } else if (!scan(*c.text_offset, c.text_rows)) {
            nonfinite_text.push_back(c.id);
            violate("non_finite", "text rows of class " + std::to_string(c.id) + " hold NaN or Inf",
                    {{"class", c.id}});
        }
    }
    report["items"] = m.items.size();
    report["classes"] = splits_of.size();
    report["class_item_counts"] = class_counts;
    report["split_item_counts"] = split_counts;
    report["nonfinite_items"] = nonfinite_items;
    report["nonfinite_text_classes"] = nonfinite_text;
    report["split_disjoint"] = std::none_of(splits_of.begin(), splits_of.end(),
                                            [](const auto& kv) { return kv.second.size() > 1; });
    return finish();
}

namespace detail {

std::vector<char> read_file(const fs::path& path) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw CacheIoError("cannot read " + path.string() + ": " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CacheIoError("cannot open " + path.string());
    std::vector<char> bytes(static_cast<std::size_t>(size));
    if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
        throw CacheIoError("failed reading " + path.string());
    }
    return bytes;
}

void write_atomic(const fs::path& path, std::span<const char> bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheIoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw CacheIoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw CacheIoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace detail

}  // namespace safsar::cache
